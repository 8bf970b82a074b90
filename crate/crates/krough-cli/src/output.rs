//! Atomic file output, asserted checks and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: String,
    pub passes: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

/// Collects the files and checks of one subcommand.
pub struct Run {
    pub command: String,
    pub dir: PathBuf,
    pub checks: Vec<Check>,
    pub files: Vec<OutputFile>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    crate_version: &'a str,
    core_version: &'a str,
    parallel: bool,
    config: &'a RunConfig,
    config_sha256: String,
    seeds: &'a [u64],
    checks: &'a [Check],
    files: &'a [OutputFile],
    passed: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

impl Run {
    pub fn new(command: &str, cfg: &RunConfig) -> Result<Self> {
        let dir = cfg.output_dir.join(command);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Run {
            command: command.into(),
            dir,
            checks: Vec::new(),
            files: Vec::new(),
        })
    }

    pub fn check(
        &mut self,
        name: impl Into<String>,
        value: f64,
        target: impl Into<String>,
        passes: bool,
    ) {
        let c = Check {
            name: name.into(),
            value,
            target: target.into(),
            passes,
        };
        eprintln!(
            "{} {}: {:.6e} (target {})",
            if c.passes { "ok  " } else { "FAIL" },
            c.name,
            c.value,
            c.target
        );
        self.checks.push(c);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passes)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.files.push(OutputFile {
            path: name.into(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv: {e}"))?;
        self.write_bytes(name, &bytes)
    }

    /// Writes manifest.json and checks.csv; returns whether every check passed.
    pub fn finish(mut self, cfg: &RunConfig) -> Result<bool> {
        let checks = self.checks.clone();
        self.write_csv("checks.csv", &checks)?;
        let config_json = serde_json::to_vec(cfg)?;
        let m = Manifest {
            command: &self.command,
            crate_version: env!("CARGO_PKG_VERSION"),
            core_version: krough_core::VERSION,
            parallel: cfg!(feature = "parallel"),
            config: cfg,
            config_sha256: sha256_hex(&config_json),
            seeds: &cfg.seeds,
            checks: &self.checks,
            files: &self.files,
            passed: self.passed(),
        };
        let text = serde_json::to_vec_pretty(&m)?;
        write_atomic(&self.dir.join("manifest.json"), &text)?;
        Ok(m.passed)
    }
}
