use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use krough_cli::commands;
use krough_cli::config::RunConfig;
use krough_cli::output::Run;

/// Renormalization constants, moment scaling and renormalized PAM runs.
///
/// Exit codes: 0 when every asserted check passes, 1 when a check fails,
/// 2 on configuration or numerical errors.
#[derive(Parser)]
#[command(name = "krough", version)]
struct Cli {
    /// TOML configuration; the built-in example is used when absent.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. --set moments.replicas=500.
    #[arg(short = 's', long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// c_n across levels with slope fits.
    RenormConstants,
    /// First and second level moment scaling with Monte Carlo cross-checks.
    MomentScaling,
    /// Cross-level convergence of the renormalized PAM and its c = 0 control.
    PamConverge,
    /// renorm-constants in spatial mode.
    SpatialRenormConstants,
    /// moment-scaling in spatial mode.
    SpatialMomentScaling,
    /// pam-converge in spatial mode.
    SpatialPamConverge,
    /// Kernel reconstruction, partition of unity and Fourier decay.
    VerifyKernel,
    /// Mollifier assumption certificate.
    VerifyMollifier,
    /// Writes one field sample at level n (binary, plus CSV when small).
    SampleField {
        #[arg(long, default_value_t = 3)]
        level: u32,
    },
    /// Prints the effective configuration as TOML.
    ShowConfig,
}

/// Built-in spatial configurations: white noise on R² (border) for the
/// constants, a sub-critical d = 2 tuple elsewhere so the c = 0 control
/// diverges geometrically.
fn spatial_defaults(command: &Command) -> Vec<String> {
    let keys: &[&str] = match command {
        Command::SpatialRenormConstants => &["h=[0.5, 0.5]"],
        Command::SpatialMomentScaling => &[
            "h=[0.4, 0.4]",
            "moments.n_second=3",
            "moments.ells_second=[0, 1, 2, 3]",
            "moments.mc_first=[[0, 2], [1, 2]]",
            "moments.mc_second=[[0, 2]]",
            "moments.replicas=1000",
        ],
        _ => &["h=[0.4, 0.4]"],
    };
    keys.iter().map(|s| s.to_string()).collect()
}

fn execute(cli: Cli) -> Result<bool> {
    let spatial = matches!(
        cli.command,
        Command::SpatialRenormConstants
            | Command::SpatialMomentScaling
            | Command::SpatialPamConverge
    );
    let mut overrides = if spatial && cli.config.is_none() {
        spatial_defaults(&cli.command)
    } else {
        Vec::new()
    };
    if spatial {
        overrides.insert(0, "mode=\"spatial\"".into());
    }
    overrides.extend(cli.overrides.iter().cloned());
    let mut cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    if spatial {
        cfg.h0 = None;
    }
    let (name, body): (&str, Box<dyn Fn(&RunConfig, &mut Run) -> Result<()>>) = match cli.command {
        Command::ShowConfig => {
            print!("{}", cfg.to_toml()?);
            return Ok(true);
        }
        Command::RenormConstants => ("renorm-constants", Box::new(commands::renorm_constants)),
        Command::SpatialRenormConstants => (
            "spatial-renorm-constants",
            Box::new(commands::renorm_constants),
        ),
        Command::MomentScaling => ("moment-scaling", Box::new(commands::moment_scaling)),
        Command::SpatialMomentScaling => {
            ("spatial-moment-scaling", Box::new(commands::moment_scaling))
        }
        Command::PamConverge => ("pam-converge", Box::new(commands::pam_converge)),
        Command::SpatialPamConverge => ("spatial-pam-converge", Box::new(commands::pam_converge)),
        Command::VerifyKernel => ("verify-kernel", Box::new(commands::verify_kernel)),
        Command::VerifyMollifier => ("verify-mollifier", Box::new(commands::verify_mollifier)),
        Command::SampleField { level } => (
            "sample-field",
            Box::new(move |c: &RunConfig, r: &mut Run| commands::sample_field(c, r, level)),
        ),
    };
    let mut run = Run::new(name, &cfg)?;
    body(&cfg, &mut run)?;
    let dir = run.dir.clone();
    let passed = run.finish(&cfg)?;
    println!(
        "{name}: {} ({})",
        if passed {
            "all checks passed"
        } else {
            "checks failed"
        },
        dir.display()
    );
    Ok(passed)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
