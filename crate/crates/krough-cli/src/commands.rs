//! Subcommand bodies. Each one fills a [`Run`] with CSV files and checks.

use anyhow::{bail, Result};
use krough_core::field_synthesis::{Lattice, LatticeField, SpectralModel};
use krough_core::kernels::{decay_check, heat_kernel, partition_residual, Part, RayAxis};
use krough_core::krough::{
    exact_var_first, exact_var_second, lattice_moments_second, lattice_var_first, log2_slope,
    monte_carlo_moments, renormalization, MomentLattice,
};
use krough_core::pam_solver::{
    convergence_study, heat_evolve, solve_pam, PamOptions, PamStudyConfig,
};
use krough_core::quadrature::{
    border_slope_closed_form, border_slope_closed_form_spatial, c_n, c_n_spatial_kernel,
    j_constant, slope_fit,
};
use krough_core::spectral_model::{verify_assumption_rho, Mode, Regime, SampleGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::Run;

#[derive(Serialize)]
struct ConstantRow {
    n: u32,
    c_n: f64,
    log2_c_n: f64,
}

#[derive(Serialize)]
struct SlopeRow {
    quantity: String,
    fitted: f64,
    target: f64,
}

pub fn renorm_constants(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let h = cfg.validate(false)?;
    let m = cfg.mollifier()?;
    let kernel = match h.mode() {
        Mode::Spatial => Some(cfg.kernel()?),
        Mode::SpaceTime => None,
    };
    let mut rows = Vec::new();
    for &n in &cfg.levels {
        let c = match &kernel {
            Some(k) => c_n_spatial_kernel(&m, &h, k, n)?,
            None => c_n(&m, &h, n)?,
        };
        rows.push(ConstantRow {
            n,
            c_n: c,
            log2_c_n: c.log2(),
        });
    }
    run.write_csv("constants.csv", &rows)?;
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let mut slopes = Vec::new();
    if h.regime() == (Regime::Rough { border: true }) {
        let cs: Vec<f64> = rows.iter().map(|r| r.c_n).collect();
        let fitted = slope_fit(&ns, &cs)?.slope;
        let closed = match h.mode() {
            Mode::SpaceTime => border_slope_closed_form(&h)?,
            Mode::Spatial => border_slope_closed_form_spatial(&h)?,
        };
        let rel = (fitted / closed - 1.0).abs();
        run.check(
            "border slope / closed form - 1",
            rel,
            format!("<= {}", cfg.tolerances.border_rel),
            rel <= cfg.tolerances.border_rel,
        );
        slopes.push(SlopeRow {
            quantity: "c_n per level".into(),
            fitted,
            target: closed,
        });
    } else {
        let ls: Vec<f64> = rows.iter().map(|r| r.log2_c_n).collect();
        let fitted = slope_fit(&ns, &ls)?.slope;
        let target = 2.0 * h.criticality_gap();
        let err = (fitted - target).abs();
        run.check(
            "log2 c_n slope error",
            err,
            format!("<= {}", cfg.tolerances.slope),
            err <= cfg.tolerances.slope,
        );
        slopes.push(SlopeRow {
            quantity: "log2 c_n per level".into(),
            fitted,
            target,
        });
        if h.mode() == Mode::SpaceTime {
            let j = j_constant(&m, &h)?;
            slopes.push(SlopeRow {
                quantity: "J".into(),
                fitted: j.value,
                target: f64::NAN,
            });
        }
    }
    run.write_csv("slopes.csv", &slopes)
}

#[derive(Serialize)]
struct MomentRow {
    level: u8,
    n: u32,
    ell: u32,
    moment: f64,
}

#[derive(Serialize)]
struct McRow {
    level: u8,
    n: u32,
    ell: u32,
    replicas: usize,
    mc: f64,
    mc_se: f64,
    lattice_exact: f64,
    continuum: f64,
    z: f64,
}

pub fn moment_scaling(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let h = cfg.validate(false)?;
    let m = cfg.mollifier()?;
    let kernel = cfg.kernel()?;
    let psi = cfg.test_function()?;
    let mp = &cfg.moments;
    let grid = MomentLattice {
        nodes: mp.nodes,
        box_coarse: mp.box_len,
        box_fine: mp.box_len,
    };
    let gap = h.criticality_gap();

    let mut rows = Vec::new();
    for &ell in &mp.ells_first {
        rows.push(MomentRow {
            level: 1,
            n: mp.n_first,
            ell,
            moment: exact_var_first(&h, &m, mp.n_first, &psi, ell)?,
        });
    }
    let first: Vec<&MomentRow> = rows.iter().collect();
    let xs: Vec<f64> = first.iter().map(|r| r.ell as f64).collect();
    let vs: Vec<f64> = first.iter().map(|r| r.moment).collect();
    let s1 = log2_slope(&xs, &vs)?;
    let target1 = 2.0 * (gap + 1.0);
    run.check(
        format!("first-level slope {s1:.4} vs {target1:.4}"),
        (s1 - target1).abs(),
        format!("<= {}", cfg.tolerances.slope),
        (s1 - target1).abs() <= cfg.tolerances.slope,
    );

    let mut second = Vec::new();
    for &ell in &mp.ells_second {
        let sm = exact_var_second(&h, &m, &kernel, mp.n_second, &psi, ell, grid)?;
        second.push(MomentRow {
            level: 2,
            n: mp.n_second,
            ell,
            moment: sm.second_moment,
        });
    }
    if second.len() >= 2 {
        let xs: Vec<f64> = second.iter().map(|r| r.ell as f64).collect();
        let vs: Vec<f64> = second.iter().map(|r| r.moment).collect();
        let s2 = log2_slope(&xs, &vs)?;
        let bound = 4.0 * gap + cfg.tolerances.second_slope_margin;
        run.check(
            format!("second-level slope vs bound {bound:.4}"),
            s2,
            format!("<= {bound}"),
            s2 <= bound,
        );
    }
    rows.extend(second);
    run.write_csv("moments.csv", &rows)?;

    let mut mc = Vec::new();
    let points = mp
        .mc_first
        .iter()
        .map(|&p| (1u8, p))
        .chain(mp.mc_second.iter().map(|&p| (2u8, p)));
    for (level, (ell, n)) in points {
        let lattice = grid.lattice(&h, n, ell)?;
        let model = SpectralModel::new(&h, &m, n, &lattice)?;
        let model = if level == 2 {
            model.with_kernel(&kernel)?
        } else {
            model
        };
        let c = if level == 2 {
            renormalization(&h, &m, &kernel, n)?
        } else {
            0.0
        };
        let stats = monte_carlo_moments(&model, c, &psi, ell, mp.replicas, cfg.seed())?;
        let (est, se, exact, cont) = if level == 1 {
            (
                stats.first_var,
                stats.first_var_se,
                lattice_var_first(&model, &psi, ell)?,
                exact_var_first(&h, &m, n, &psi, ell)?,
            )
        } else {
            let sm = lattice_moments_second(&model, c, &psi, ell)?;
            (stats.second_var, stats.second_var_se, sm.variance, f64::NAN)
        };
        let z = (est - exact) / se;
        run.check(
            format!("level-{level} MC at (ell={ell}, n={n}) in standard errors"),
            z.abs(),
            format!("<= {}", cfg.tolerances.mc_se),
            z.abs() <= cfg.tolerances.mc_se,
        );
        mc.push(McRow {
            level,
            n,
            ell,
            replicas: stats.replicas,
            mc: est,
            mc_se: se,
            lattice_exact: exact,
            continuum: cont,
            z,
        });
    }
    run.write_csv("monte_carlo.csv", &mc)
}

#[derive(Serialize)]
struct PamRow {
    n: u32,
    m: u32,
    c_n: f64,
    c_m: f64,
    renormalized: f64,
    control: f64,
}

pub fn pam_converge(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let h = cfg.validate(true)?;
    let m = cfg.mollifier()?;
    let kernel = cfg.kernel()?;
    let p = &cfg.pam;
    let study_cfg = PamStudyConfig {
        levels: p.levels.clone(),
        t_end: p.t_end,
        box_len: p.box_len,
        seed: cfg.seed(),
        initial: p.initial.clone(),
        snapshot_every: p.snapshot_every,
    };
    let study = convergence_study(&h, &m, &kernel, &study_cfg)?;
    let rows: Vec<PamRow> = study
        .rows
        .iter()
        .map(|r| PamRow {
            n: r.n,
            m: r.m,
            c_n: r.c_n,
            c_m: r.c_m,
            renormalized: r.renormalized,
            control: r.control,
        })
        .collect();
    run.write_csv("pam_convergence.csv", &rows)?;
    for w in study.rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        run.check(
            format!("renormalized diff ({},{}) -> ({},{})", a.n, a.m, b.n, b.m),
            b.renormalized / a.renormalized,
            "< 1",
            b.renormalized < a.renormalized,
        );
        if h.regime() != Regime::Young {
            run.check(
                format!("control diff ({},{}) -> ({},{})", a.n, a.m, b.n, b.m),
                b.control / a.control,
                "> 1",
                b.control > a.control,
            );
        }
    }
    if p.trajectories {
        for (n, fixed, _) in &study.runs {
            let mut buf = Vec::new();
            krough_core::io::write_trajectory(&mut buf, fixed)?;
            run.write_bytes(&format!("trajectory_n{n}.krf"), &buf)?;
        }
    }

    // analytic sanity cases on the study grid
    let l = &study.lattice;
    let u0 = p.initial.sample(l.d, l.nx, l.dx)?;
    let opts = PamOptions {
        t_end: p.t_end,
        dt: study.dt,
        snapshot_every: usize::MAX,
        allow_coarse: false,
    };
    let zero = LatticeField::from_samples(l.clone(), vec![0.0; l.len()])?;
    let heat = solve_pam(&zero, 0.0, &u0, &opts)?;
    let exact = heat_evolve(&u0, l.d, l.nx, l.dx, p.t_end)?;
    let err = sup_diff(heat.last(), &exact);
    run.check(
        "heat-only sup error",
        err,
        format!("<= {}", cfg.tolerances.pde),
        err <= cfg.tolerances.pde,
    );
    let c0 = 0.5;
    let konst = LatticeField::from_samples(l.clone(), vec![c0; l.len()])?;
    let ones = vec![1.0; u0.len()];
    let grown = solve_pam(&konst, 0.0, &ones, &opts)?;
    let err = grown
        .last()
        .iter()
        .fold(0.0f64, |a, v| a.max((v - (c0 * p.t_end).exp()).abs()));
    run.check(
        "constant-noise sup error",
        err,
        format!("<= {}", cfg.tolerances.pde),
        err <= cfg.tolerances.pde,
    );
    Ok(())
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[derive(Serialize)]
struct ReconstructionRow {
    s: f64,
    x: String,
    k: f64,
    r: f64,
    p: f64,
    error: f64,
}

#[derive(Serialize)]
struct DecayRow {
    part: String,
    exponents: String,
    axis: String,
    slope: f64,
    bound: f64,
    samples: usize,
    passes: bool,
}

/// Exponent tuples (a0, a1, ..., ad) with Σ a_i below (K) or above (R) one.
fn decay_tuples(d: usize, above_one: bool) -> Vec<Vec<f64>> {
    let sums: [f64; 5] = if above_one {
        [1.1, 1.3, 1.5, 1.7, 1.9]
    } else {
        [0.1, 0.3, 0.5, 0.7, 0.9]
    };
    let weights = [0.5, 0.3, 0.7, 0.4, 0.6];
    sums.iter()
        .zip(weights)
        .map(|(&s, w)| {
            let mut t = vec![s * w];
            t.extend(std::iter::repeat(s * (1.0 - w) / d as f64).take(d));
            t
        })
        .collect()
}

pub fn verify_kernel(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let d = cfg.d();
    let kernel = cfg.kernel()?;
    let res = partition_residual(kernel.partition(), d, 1000, cfg.seed());
    run.check("partition of unity residual", res, "<= 1e-10", res <= 1e-10);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());
    let mut rows = Vec::new();
    for _ in 0..200 {
        let s = 2f64.powf(rng.random_range(-20.0..2.0));
        let x: Vec<f64> = (0..d)
            .map(|_| rng.random_range(-3.0..3.0) * s.sqrt())
            .collect();
        let (k, r, p) = (
            kernel.eval_k(s, &x),
            kernel.eval_r(s, &x),
            heat_kernel(s, &x)?,
        );
        let xs: Vec<String> = x.iter().map(|v| format!("{v:e}")).collect();
        rows.push(ReconstructionRow {
            s,
            x: xs.join(";"),
            k,
            r,
            p,
            error: (k + r - p).abs(),
        });
    }
    let worst = rows.iter().fold(0.0f64, |a, r| a.max(r.error));
    run.check("max |K+R-p| over 200 points", worst, "< 1e-8", worst < 1e-8);
    run.write_csv("reconstruction.csv", &rows)?;

    // the oscillatory time integral stops converging near λ = 2500
    let ts: Vec<f64> = (0..13).map(|i| 10f64 * 2f64.powf(0.6 * i as f64)).collect();
    let base = vec![0.0; d + 1];
    let mut decay = Vec::new();
    for (part, above) in [(Part::K, false), (Part::R, true)] {
        let tuples = decay_tuples(d, above);
        for axis in std::iter::once(RayAxis::Time).chain((0..d).map(RayAxis::Space)) {
            // the fitted ray does not depend on the tuple, only the bound does
            let c = decay_check(
                &kernel,
                part,
                &tuples[0],
                axis,
                &base,
                &ts,
                cfg.tolerances.slope,
            )?;
            for t in &tuples {
                let bound = match axis {
                    RayAxis::Time => -t[0],
                    RayAxis::Space(i) => -2.0 * t[1 + i],
                };
                let ex: Vec<String> = t.iter().map(|v| format!("{v:.3}")).collect();
                decay.push(DecayRow {
                    part: format!("{part:?}"),
                    exponents: ex.join(";"),
                    axis: format!("{axis:?}"),
                    slope: c.slope,
                    bound,
                    samples: c.samples,
                    passes: c.slope <= bound + cfg.tolerances.slope,
                });
            }
        }
    }
    let failed = decay.iter().filter(|r| !r.passes).count();
    run.check(
        "decay rays violating the bound",
        failed as f64,
        "0",
        failed == 0,
    );
    run.write_csv("decay.csv", &decay)
}

pub fn verify_mollifier(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let m = cfg.mollifier()?;
    let axes = cfg.d() + 1;
    let mut taus = vec![vec![0.0; axes]];
    for k in 0..axes {
        let mut t = vec![0.0; axes];
        t[k] = 1.0;
        taus.push(t);
    }
    let mut all = vec![0.5; axes];
    all[0] = 1.0;
    taus.push(all);
    let grid = SampleGrid::geometric(axes, 0.05, 200.0, if axes > 2 { 10 } else { 16 });
    let cert = verify_assumption_rho(&m, &taus, &grid)?;
    run.check(
        "F rho(0) - 1",
        (cert.origin_value - 1.0).abs(),
        "<= 1e-12",
        (cert.origin_value - 1.0).abs() <= 1e-12,
    );
    run.check(
        "sup |F rho|",
        cert.sup_modulus,
        "<= 1",
        cert.sup_modulus <= 1.0 + 1e-12,
    );
    run.check(
        "even symmetry",
        f64::from(u8::from(cert.even)),
        "1",
        cert.even,
    );
    let bad = cert.rows.iter().filter(|r| !r.bounded).count();
    run.check("diverging tau rows", bad as f64, "0", bad == 0);
    run.write_bytes("certificate.csv", cert.to_csv().as_bytes())
}

/// Field snapshot for a quick look; not part of any check.
pub fn sample_field(cfg: &RunConfig, run: &mut Run, n: u32) -> Result<()> {
    let h = cfg.validate(true)?;
    let m = cfg.mollifier()?;
    let l = Lattice::for_level(&h, n, cfg.pam.box_len, cfg.pam.box_len)?;
    if l.len() > 1 << 24 {
        bail!("lattice with {} nodes is too large for a snapshot", l.len());
    }
    let f = SpectralModel::new(&h, &m, n, &l)?.sample(cfg.seed())?;
    let mut buf = Vec::new();
    krough_core::io::write_field(&mut buf, &f)?;
    run.write_bytes(&format!("field_n{n}.krf"), &buf)?;
    if l.len() <= 1 << 16 {
        let mut csv = Vec::new();
        krough_core::io::write_field_csv(&mut csv, &f)?;
        run.write_bytes(&format!("field_n{n}.csv"), &csv)?;
    }
    Ok(())
}
