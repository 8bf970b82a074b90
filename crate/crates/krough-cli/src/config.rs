//! Run configuration: a TOML file plus `key=value` overrides.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use krough_core::kernels::LocalizedHeatKernel;
use krough_core::pam_solver::InitialCondition;
use krough_core::spectral_model::{HurstConfig, Mollifier, MollifierKind, Regime};
use krough_core::testfn::TestFunction;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    SpaceTime,
    Spatial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelParams {
    pub l_max: u32,
    pub smoothness: u32,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            l_max: 24,
            smoothness: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Absolute tolerance on fitted exponents.
    pub slope: f64,
    /// Relative tolerance of border slopes against the closed form.
    pub border_rel: f64,
    /// Allowed Monte Carlo deviation in standard errors.
    pub mc_se: f64,
    /// Slack added to the second-level slope bound.
    pub second_slope_margin: f64,
    /// Analytic PDE cases.
    pub pde: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            slope: 0.1,
            border_rel: 0.05,
            mc_se: 3.0,
            second_slope_margin: 0.2,
            pde: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentParams {
    /// Mollification level of the first-level slope.
    pub n_first: u32,
    pub ells_first: Vec<u32>,
    pub n_second: u32,
    pub ells_second: Vec<u32>,
    /// Bump order k; 2(d+1)+1 when absent.
    pub test_order: Option<usize>,
    /// (ℓ, n) pairs of the first-level Monte Carlo checks.
    pub mc_first: Vec<(u32, u32)>,
    /// (ℓ, n) pairs of the second-level Monte Carlo checks.
    pub mc_second: Vec<(u32, u32)>,
    pub replicas: usize,
    /// Minimum lattice nodes across the test-function support.
    pub nodes: usize,
    pub box_len: f64,
}

impl Default for MomentParams {
    fn default() -> Self {
        MomentParams {
            n_first: 12,
            ells_first: (0..=6).collect(),
            n_second: 5,
            ells_second: (0..=5).collect(),
            test_order: None,
            mc_first: vec![(0, 2), (1, 2), (1, 3)],
            mc_second: vec![(0, 2), (1, 3)],
            replicas: 2000,
            nodes: 8,
            box_len: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PamParams {
    pub levels: Vec<u32>,
    pub t_end: f64,
    pub box_len: f64,
    pub initial: InitialCondition,
    pub snapshot_every: usize,
    /// Write binary trajectories next to the CSV.
    pub trajectories: bool,
}

impl Default for PamParams {
    fn default() -> Self {
        PamParams {
            levels: vec![3, 4, 5],
            t_end: 0.5,
            box_len: 4.0,
            initial: InitialCondition::Constant { value: 1.0 },
            snapshot_every: 16,
            trajectories: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: ModeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h0: Option<f64>,
    pub h: Vec<f64>,
    #[serde(default = "default_mollifier")]
    pub mollifier: MollifierKind,
    #[serde(default)]
    pub kernel: KernelParams,
    #[serde(default = "default_levels")]
    pub levels: Vec<u32>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub moments: MomentParams,
    #[serde(default)]
    pub pam: PamParams,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_mollifier() -> MollifierKind {
    MollifierKind::GaussGauss
}

fn default_levels() -> Vec<u32> {
    (2..=8).collect()
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    /// Rough sub-critical space-time configuration in d = 1.
    pub fn example() -> Self {
        RunConfig {
            mode: ModeName::SpaceTime,
            h0: Some(0.75),
            h: vec![0.2],
            mollifier: MollifierKind::GaussGauss,
            kernel: KernelParams::default(),
            levels: default_levels(),
            seeds: default_seeds(),
            tolerances: Tolerances::default(),
            moments: MomentParams::default(),
            pam: PamParams::default(),
            output_dir: default_output(),
        }
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing {}", p.display()))?
            }
            None => toml::Table::try_from(RunConfig::example())?,
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(value)
            .try_into()
            .context("invalid configuration")?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn d(&self) -> usize {
        self.h.len()
    }

    pub fn hurst(&self) -> Result<HurstConfig> {
        let h = match (self.mode, self.h0) {
            (ModeName::SpaceTime, Some(h0)) => HurstConfig::space_time(h0, &self.h)?,
            (ModeName::SpaceTime, None) => bail!("space-time mode needs h0"),
            (ModeName::Spatial, None) => HurstConfig::spatial(&self.h)?,
            (ModeName::Spatial, Some(_)) => bail!("spatial mode takes no h0"),
        };
        Ok(h)
    }

    pub fn mollifier(&self) -> Result<Mollifier> {
        Ok(Mollifier::from_kind(&self.mollifier, self.d())?)
    }

    pub fn kernel(&self) -> Result<LocalizedHeatKernel> {
        Ok(LocalizedHeatKernel::build(
            self.d(),
            self.kernel.l_max,
            self.kernel.smoothness,
        )?)
    }

    pub fn test_function(&self) -> Result<TestFunction> {
        let k = self.moments.test_order.unwrap_or(2 * (self.d() + 1) + 1);
        Ok(TestFunction::bump(self.d(), k)?)
    }

    pub fn seed(&self) -> u64 {
        self.seeds.first().copied().unwrap_or(1)
    }

    /// Checks that the Hurst tuple sits in a regime the command supports.
    pub fn validate(&self, young_ok: bool) -> Result<HurstConfig> {
        let h = self.hurst()?;
        if self.levels.is_empty() || self.seeds.is_empty() {
            bail!("levels and seeds must be non-empty");
        }
        match h.regime() {
            Regime::Unsupported => bail!(
                "{} is below the rough window (2H0+H <= d+1/2); raise the Hurst indices",
                h.label()
            ),
            Regime::Young if !young_ok => bail!(
                "{} is in the Young regime (2H0+H > d+1) where c_n stays bounded and is not defined here; \
                 lower the Hurst indices to 2H0+H <= d+1 or use pam-converge for the Young comparison",
                h.label()
            ),
            _ => Ok(h),
        }
    }
}

/// Sets `a.b.c = value`; the value is parsed as a TOML literal when possible
/// and taken as a string otherwise.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override '{spec}' is not key=value"))?;
    let parsed: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("'{p}' in '{key}' is not a table"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_round_trips() {
        let c = RunConfig::example();
        let back: RunConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let c = RunConfig::load(
            None,
            &[
                "moments.replicas=12".into(),
                "h=[0.3]".into(),
                "mollifier=indicator-heat".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.moments.replicas, 12);
        assert_eq!(c.h, vec![0.3]);
        assert_eq!(c.mollifier, MollifierKind::IndicatorHeat);
    }

    #[test]
    fn young_regime_is_rejected_with_hint() {
        let c = RunConfig::load(None, &["h=[0.55]".into()]).unwrap();
        let e = c.validate(false).unwrap_err().to_string();
        assert!(e.contains("Young"), "{e}");
        assert!(c.validate(true).is_ok());
    }
}
