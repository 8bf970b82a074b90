//! Strang-split solver for the renormalized mollified parabolic Anderson
//! equation ∂_t u = ½Δu + u(Ẇⁿ - c) on a periodic spatial grid, and the
//! cross-level convergence study with its un-renormalized control.
//!
//! One step of size dt: heat semigroup for dt/2 (spectral multiplier
//! e^{-|ξ|² dt/4}), multiplication by exp((Ẇⁿ(t + dt/2, ·) - c) dt), heat
//! for dt/2 again. The noise is read at the midpoint node, so the field
//! lattice must have nodes at every half step.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::NdFft;
use crate::field_synthesis::{mix_seed, Lattice, LatticeField, SpectralModel};
use crate::kernels::LocalizedHeatKernel;
use crate::krough::renormalization;
use crate::spectral_model::{HurstConfig, Mollifier, Regime};

/// Initial data on the spatial grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InitialCondition {
    Constant {
        value: f64,
    },
    /// (1 - |x - centre|²/r²)³ inside the ball, zero outside.
    Bump {
        centre: Vec<f64>,
        radius: f64,
    },
    /// exp(-|x - centre|²/(2 w²)).
    Gaussian {
        centre: Vec<f64>,
        width: f64,
    },
}

impl InitialCondition {
    pub fn sample(&self, d: usize, nx: usize, dx: f64) -> Result<Vec<f64>> {
        let m = nx.pow(d as u32);
        let point = |k: usize| -> Vec<f64> {
            let mut v = vec![0.0; d];
            let mut r = k;
            for a in (0..d).rev() {
                v[a] = (r % nx) as f64 * dx;
                r /= nx;
            }
            v
        };
        let dist2 =
            |x: &[f64], c: &[f64]| x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        match self {
            InitialCondition::Constant { value } => Ok(vec![*value; m]),
            InitialCondition::Bump { centre, radius } => {
                if centre.len() != d || !(*radius > 0.0) {
                    return Err(Error::Degenerate(
                        "bump needs a centre in R^d and a positive radius".into(),
                    ));
                }
                Ok((0..m)
                    .map(|k| {
                        let q = dist2(&point(k), centre) / (radius * radius);
                        if q < 1.0 {
                            (1.0 - q).powi(3)
                        } else {
                            0.0
                        }
                    })
                    .collect())
            }
            InitialCondition::Gaussian { centre, width } => {
                if centre.len() != d || !(*width > 0.0) {
                    return Err(Error::Degenerate(
                        "Gaussian needs a centre in R^d and a positive width".into(),
                    ));
                }
                Ok((0..m)
                    .map(|k| (-0.5 * dist2(&point(k), centre) / (width * width)).exp())
                    .collect())
            }
        }
    }
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PamOptions {
    pub t_end: f64,
    pub dt: f64,
    /// Store u every this many steps (and always at t = 0 and t = T).
    pub snapshot_every: usize,
    /// Skip the dt <= 4^{-n}/4 resolution check (self-convergence tests).
    pub allow_coarse: bool,
}

/// A solution trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PamRun {
    pub level: u32,
    pub seed: u64,
    pub c_used: f64,
    pub d: usize,
    pub nx: usize,
    pub dx: f64,
    pub dt: f64,
    pub t_end: f64,
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
}

impl PamRun {
    pub fn last(&self) -> &[f64] {
        self.snapshots
            .last()
            .expect("at least the initial snapshot")
    }

    /// sup over common snapshot times and grid points of |u - v|.
    pub fn sup_distance(&self, other: &PamRun) -> Result<f64> {
        if self.times.len() != other.times.len() || self.nx != other.nx || self.d != other.d {
            return Err(Error::MalformedGrid(
                "runs use different grids or snapshot times".into(),
            ));
        }
        let mut best = 0.0f64;
        for ((ta, a), (tb, b)) in self
            .times
            .iter()
            .zip(&self.snapshots)
            .zip(other.times.iter().zip(&other.snapshots))
        {
            if (ta - tb).abs() > 1e-12 {
                return Err(Error::MalformedGrid("snapshot times differ".into()));
            }
            for (x, y) in a.iter().zip(b) {
                best = best.max((x - y).abs());
            }
        }
        Ok(best)
    }
}

/// Integrates ∂_t u = ½Δu + u(Ẇ - c) from u(0) = `u0`.
pub fn solve_pam(field: &LatticeField, c: f64, u0: &[f64], opts: &PamOptions) -> Result<PamRun> {
    let l = &field.lattice;
    let d = l.d;
    let m = l.nx.pow(d as u32);
    if u0.len() != m {
        return Err(Error::MalformedGrid(format!(
            "initial condition has {} points, grid has {m}",
            u0.len()
        )));
    }
    if !(opts.dt > 0.0) || !(opts.t_end > 0.0) {
        return Err(Error::Degenerate(
            "time step and horizon must be positive".into(),
        ));
    }
    let steps_f = opts.t_end / opts.dt;
    let steps = steps_f.round() as usize;
    if (steps_f - steps as f64).abs() > 1e-9 * steps_f || steps == 0 {
        return Err(Error::MalformedGrid(format!(
            "T = {} is not a multiple of dt = {}",
            opts.t_end, opts.dt
        )));
    }
    // midpoint node j*stride + stride/2 of the field time axis
    let (stride, has_time) = if l.has_time() {
        if !opts.allow_coarse && opts.dt > 0.25 * 4f64.powi(-(field.level as i32)) * (1.0 + 1e-12) {
            return Err(Error::UnderResolved(format!(
                "dt = {} exceeds 4^-n/4 = {} at level {}",
                opts.dt,
                0.25 * 4f64.powi(-(field.level as i32)),
                field.level
            )));
        }
        let q = opts.dt / l.dt;
        let qi = q.round() as usize;
        if (q - qi as f64).abs() > 1e-9 || qi < 2 || qi % 2 != 0 {
            return Err(Error::MalformedGrid(format!(
                "dt / field dt = {q} must be an even integer"
            )));
        }
        if (steps * qi) as f64 * l.dt > l.period(0) - l.dt + 1e-12 {
            return Err(Error::MalformedGrid(
                "time horizon exceeds the field lattice".into(),
            ));
        }
        (qi, true)
    } else {
        (0, false)
    };
    let fft = NdFft::new(&vec![l.nx; d])?;
    let half_heat: Vec<f64> = (0..m)
        .map(|k| {
            let mut r = k;
            let mut q = 0.0;
            for _ in 0..d {
                let f = l.frequency(usize::from(has_time), r % l.nx);
                q += f * f;
                r /= l.nx;
            }
            (-0.25 * q * opts.dt).exp()
        })
        .collect();
    let heat = |u: &mut Vec<Complex64>| -> Result<()> {
        fft.forward(u)?;
        for (v, h) in u.iter_mut().zip(&half_heat) {
            *v *= h;
        }
        fft.inverse(u)
    };
    let every = opts.snapshot_every.max(1);
    let mut u: Vec<Complex64> = u0.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut times = vec![0.0];
    let mut snapshots = vec![u0.to_vec()];
    for j in 0..steps {
        heat(&mut u)?;
        let noise = if has_time {
            field.slice(j * stride + stride / 2)
        } else {
            &field.samples[..]
        };
        for (v, w) in u.iter_mut().zip(noise) {
            *v = Complex64::new(v.re * ((w - c) * opts.dt).exp(), 0.0);
        }
        heat(&mut u)?;
        let big = u.iter().fold(0.0f64, |a, v| a.max(v.re.abs()));
        if !big.is_finite() || big > 1e300 {
            return Err(Error::NonFinite(format!(
                "|u| = {big:e} after step {} (t = {})",
                j + 1,
                (j + 1) as f64 * opts.dt
            )));
        }
        if (j + 1) % every == 0 || j + 1 == steps {
            times.push((j + 1) as f64 * opts.dt);
            snapshots.push(u.iter().map(|v| v.re).collect());
        }
    }
    Ok(PamRun {
        level: field.level,
        seed: field.seed,
        c_used: c,
        d,
        nx: l.nx,
        dx: l.dx,
        dt: opts.dt,
        t_end: opts.t_end,
        times,
        snapshots,
    })
}

/// Exact heat evolution e^{tΔ/2} of a grid function (spectral).
pub fn heat_evolve(u0: &[f64], d: usize, nx: usize, dx: f64, t: f64) -> Result<Vec<f64>> {
    let fft = NdFft::new(&vec![nx; d])?;
    let mut u: Vec<Complex64> = u0.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.forward(&mut u)?;
    let l = nx as f64 * dx;
    for (k, v) in u.iter_mut().enumerate() {
        let mut r = k;
        let mut q = 0.0;
        for _ in 0..d {
            let f = 2.0 * std::f64::consts::PI * crate::fft::signed_index(r % nx, nx) as f64 / l;
            q += f * f;
            r /= nx;
        }
        *v *= (-0.5 * q * t).exp();
    }
    fft.inverse(&mut u)?;
    Ok(u.iter().map(|v| v.re).collect())
}

/// Settings of [`convergence_study`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PamStudyConfig {
    pub levels: Vec<u32>,
    pub t_end: f64,
    pub box_len: f64,
    pub seed: u64,
    pub initial: InitialCondition,
    pub snapshot_every: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PamStudyRow {
    pub n: u32,
    pub m: u32,
    pub c_n: f64,
    pub c_m: f64,
    /// sup_{t <= T, x} |uⁿ - uᵐ| with renormalization.
    pub renormalized: f64,
    /// The same with c = 0 at both levels.
    pub control: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PamStudy {
    pub lattice: Lattice,
    pub dt: f64,
    pub rows: Vec<PamStudyRow>,
    /// Per level: (n, renormalized run, control run).
    #[serde(skip)]
    pub runs: Vec<(u32, PamRun, PamRun)>,
}

/// Solves at every level on one lattice (resolving the finest level) with
/// fields driven by the same Gaussians, then compares consecutive levels.
pub fn convergence_study(
    hurst: &HurstConfig,
    m: &Mollifier,
    kernel: &LocalizedHeatKernel,
    cfg: &PamStudyConfig,
) -> Result<PamStudy> {
    if cfg.levels.len() < 2 {
        return Err(Error::Degenerate("need at least two levels".into()));
    }
    let mut levels = cfg.levels.clone();
    levels.sort_unstable();
    let top = *levels.last().expect("nonempty");
    let dt = 0.25 * 4f64.powi(-(top as i32));
    let base = Lattice::for_level(hurst, top, cfg.box_len, cfg.box_len)?;
    let lattice = if base.has_time() {
        let field_dt = 0.5 * dt;
        let nt = ((cfg.t_end / field_dt).ceil() as usize + 2).next_power_of_two();
        Lattice::space_time(base.d, nt, field_dt, base.nx, base.dx)?
    } else {
        base
    };
    let u0 = cfg.initial.sample(lattice.d, lattice.nx, lattice.dx)?;
    let opts = PamOptions {
        t_end: cfg.t_end,
        dt,
        snapshot_every: cfg.snapshot_every,
        allow_coarse: false,
    };
    let seed = mix_seed(cfg.seed, 0);
    let runs: Vec<(u32, f64, PamRun, PamRun)> = levels
        .iter()
        .map(|&n| {
            let field = SpectralModel::new(hurst, m, n, &lattice)?.sample(seed)?;
            // no divergence to remove in the Young regime
            let c = if hurst.regime() == Regime::Young {
                0.0
            } else {
                renormalization(hurst, m, kernel, n)?
            };
            let fixed = solve_pam(&field, c, &u0, &opts)?;
            let control = solve_pam(&field, 0.0, &u0, &opts)?;
            Ok((n, c, fixed, control))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for w in runs.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        rows.push(PamStudyRow {
            n: b.0,
            m: a.0,
            c_n: b.1,
            c_m: a.1,
            renormalized: b.2.sup_distance(&a.2)?,
            control: b.3.sup_distance(&a.3)?,
        });
    }
    let runs = runs.into_iter().map(|(n, _, a, b)| (n, a, b)).collect();
    Ok(PamStudy {
        lattice,
        dt,
        rows,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_field(nt: usize, dt: f64, nx: usize, dx: f64, value: f64) -> LatticeField {
        let l = Lattice::space_time(1, nt, dt, nx, dx).unwrap();
        LatticeField::from_samples(l.clone(), vec![value; l.len()]).unwrap()
    }

    #[test]
    fn heat_only_matches_exact_semigroup() {
        let f = zero_field(256, 1.0 / 128.0, 128, 1.0 / 16.0, 0.0);
        let u0 = InitialCondition::Gaussian {
            centre: vec![4.0],
            width: 0.4,
        }
        .sample(1, 128, 1.0 / 16.0)
        .unwrap();
        let opts = PamOptions {
            t_end: 0.5,
            dt: 1.0 / 64.0,
            snapshot_every: 8,
            allow_coarse: true,
        };
        let run = solve_pam(&f, 0.0, &u0, &opts).unwrap();
        let exact = heat_evolve(&u0, 1, 128, 1.0 / 16.0, 0.5).unwrap();
        let err = run
            .last()
            .iter()
            .zip(&exact)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn constant_noise_grows_exponentially() {
        let f = zero_field(256, 1.0 / 128.0, 32, 1.0 / 8.0, 0.7);
        let u0 = vec![1.0; 32];
        let opts = PamOptions {
            t_end: 1.0,
            dt: 1.0 / 64.0,
            snapshot_every: 64,
            allow_coarse: true,
        };
        let run = solve_pam(&f, 0.0, &u0, &opts).unwrap();
        for v in run.last() {
            assert!((v - 0.7f64.exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_coarse_step() {
        let f = zero_field(256, 1.0 / 128.0, 32, 1.0 / 8.0, 0.0);
        let opts = PamOptions {
            t_end: 0.5,
            dt: 1.0 / 16.0,
            snapshot_every: 1,
            allow_coarse: false,
        };
        let mut g = f.clone();
        g.level = 2;
        assert!(matches!(
            solve_pam(&g, 0.0, &[1.0; 32], &opts),
            Err(Error::UnderResolved(_))
        ));
    }

    #[test]
    fn shift_equals_subtracted_noise() {
        let h = HurstConfig::space_time(0.75, &[0.2]).unwrap();
        let m = Mollifier::gauss_gauss(1);
        let l = Lattice::space_time(1, 512, 1.0 / 512.0, 64, 1.0 / 16.0).unwrap();
        let f = SpectralModel::new(&h, &m, 2, &l)
            .unwrap()
            .sample(7)
            .unwrap();
        let c = 0.731;
        let mut g = f.clone();
        g.samples.iter_mut().for_each(|w| *w -= c);
        let u0 = InitialCondition::Constant { value: 1.0 }
            .sample(1, 64, 1.0 / 16.0)
            .unwrap();
        let opts = PamOptions {
            t_end: 0.25,
            dt: 1.0 / 256.0,
            snapshot_every: 4,
            allow_coarse: false,
        };
        let a = solve_pam(&f, c, &u0, &opts).unwrap();
        let b = solve_pam(&g, 0.0, &u0, &opts).unwrap();
        assert_eq!(a.sup_distance(&b).unwrap(), 0.0);
    }

    #[test]
    fn positive_data_stays_positive() {
        let h = HurstConfig::space_time(0.75, &[0.2]).unwrap();
        let m = Mollifier::gauss_gauss(1);
        let l = Lattice::space_time(1, 512, 1.0 / 512.0, 64, 1.0 / 16.0).unwrap();
        let f = SpectralModel::new(&h, &m, 2, &l)
            .unwrap()
            .sample(3)
            .unwrap();
        let u0 = InitialCondition::Gaussian {
            centre: vec![2.0],
            width: 0.4,
        }
        .sample(1, 64, 1.0 / 16.0)
        .unwrap();
        let opts = PamOptions {
            t_end: 0.5,
            dt: 1.0 / 256.0,
            snapshot_every: 1,
            allow_coarse: false,
        };
        let run = solve_pam(&f, 0.3, &u0, &opts).unwrap();
        for s in &run.snapshots {
            assert!(s.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn halving_the_step_is_second_order() {
        let h = HurstConfig::spatial(&[0.45, 0.45]).unwrap();
        let m = Mollifier::gauss_gauss(2);
        let l = Lattice::spatial(2, 32, 1.0 / 8.0).unwrap();
        let f = SpectralModel::new(&h, &m, 1, &l)
            .unwrap()
            .sample(11)
            .unwrap();
        let u0 = InitialCondition::Gaussian {
            centre: vec![2.0, 2.0],
            width: 0.5,
        }
        .sample(2, 32, 1.0 / 8.0)
        .unwrap();
        let run = |dt: f64| {
            let opts = PamOptions {
                t_end: 0.5,
                dt,
                snapshot_every: usize::MAX,
                allow_coarse: true,
            };
            solve_pam(&f, 0.0, &u0, &opts).unwrap()
        };
        let (a, b, c) = (run(1.0 / 32.0), run(1.0 / 64.0), run(1.0 / 128.0));
        let ratio = a.sup_distance(&b).unwrap() / b.sup_distance(&c).unwrap();
        assert!((ratio - 4.0).abs() < 0.3, "{ratio}");
    }
}
