//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criterion 3 prescribes H0 = 0.75, H1 = 0.55 and calls it sub-critical,
//! but 2H0 + H = 2.05 exceeds d + 1 = 2, which is the Young regime where
//! c_n is not defined (J diverges at the frequency origin). The literal run
//! is reported as FAIL; a companion run at H1 = 0.45 checks the same
//! properties in the rough window. The process exits non-zero only when a
//! criterion outside that known set fails.

use std::time::Instant;

use krough_core::field_synthesis::{Lattice, LatticeField, SpectralModel};
use krough_core::kernels::{decay_check, heat_kernel, LocalizedHeatKernel, Part, RayAxis};
use krough_core::krough::*;
use krough_core::pam_solver::*;
use krough_core::quadrature::*;
use krough_core::spectral_model::{HurstConfig, Mollifier};
use krough_core::testfn::TestFunction;
use krough_core::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criteria whose literal statement cannot be met, with the reason.
const KNOWN_FAILURES: &[(u32, &str)] = &[(
    3,
    "2H0+H = 2.05 > d+1 puts (0.75, 0.55) in the Young regime; c_n and J are undefined there",
)];

struct Outcome {
    pass: bool,
    detail: String,
}

fn ok(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn rough_d1() -> (HurstConfig, Mollifier, TestFunction) {
    (
        HurstConfig::space_time(0.75, &[0.45]).unwrap(),
        Mollifier::gauss_gauss(1),
        TestFunction::bump(1, 5).unwrap(),
    )
}

fn criterion_1() -> Result<Outcome> {
    let k = LocalizedHeatKernel::build(1, 24, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let s = 2f64.powf(rng.random_range(-20.0..2.0));
        let x = rng.random_range(-3.0..3.0) * s.sqrt();
        let err = (k.eval_k(s, &[x]) + k.eval_r(s, &[x]) - heat_kernel(s, &[x])?).abs();
        worst = worst.max(err);
    }
    ok(
        worst < 1e-8,
        format!("max |K+R-p| = {worst:.2e} over 200 points"),
    )
}

fn criterion_2() -> Result<Outcome> {
    let k = LocalizedHeatKernel::build(1, 24, 1)?;
    let ts: Vec<f64> = (0..13).map(|i| 10.0 * 2f64.powf(0.6 * i as f64)).collect();
    let base = [0.0, 0.0];
    // (a0, a1) with a0 + a1 below one for K and above one for R
    let tuple = |sum: f64, w: f64| [sum * w, sum * (1.0 - w)];
    let weights = [0.5, 0.3, 0.7, 0.4, 0.6];
    let k_tuples: Vec<[f64; 2]> = [0.1, 0.3, 0.5, 0.7, 0.9]
        .iter()
        .zip(weights)
        .map(|(&s, w)| tuple(s, w))
        .collect();
    let r_tuples: Vec<[f64; 2]> = [1.1, 1.3, 1.5, 1.7, 1.9]
        .iter()
        .zip(weights)
        .map(|(&s, w)| tuple(s, w))
        .collect();
    let mut worst = f64::NEG_INFINITY;
    let mut details = Vec::new();
    for (part, tuples) in [(Part::K, &k_tuples), (Part::R, &r_tuples)] {
        for axis in [RayAxis::Time, RayAxis::Space(0)] {
            let c = decay_check(&k, part, &tuples[0], axis, &base, &ts, 0.1)?;
            details.push(format!("{part:?}/{axis:?} slope {:.3}", c.slope));
            for t in tuples {
                let bound = match axis {
                    RayAxis::Time => -t[0],
                    RayAxis::Space(_) => -2.0 * t[1],
                };
                worst = worst.max(c.slope - bound);
            }
        }
    }
    ok(
        worst <= 0.1,
        format!(
            "max(slope - bound) = {worst:.3} over 5+5 tuples; {}",
            details.join(", ")
        ),
    )
}

fn log2_fit(ns: &[u32], vals: &[f64]) -> Result<f64> {
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = vals.iter().map(|v| v.log2()).collect();
    Ok(slope_fit(&xs, &ys)?.slope)
}

/// Slope of log2 c_n over n = 2..8 against 2(d+1-(2H0+H)), and stability
/// of J under moving the frequency cutoffs.
fn subcritical_constants(h1: f64) -> Result<(f64, f64, f64)> {
    let h = HurstConfig::space_time(0.75, &[h1])?;
    let m = Mollifier::gauss_gauss(1);
    let ns: Vec<u32> = (2..=8).collect();
    let cs: Vec<f64> = ns.iter().map(|&n| c_n(&m, &h, n)).collect::<Result<_>>()?;
    let slope = log2_fit(&ns, &cs)?;
    let target = 2.0 * (2.0 - (1.5 + h1));
    let j = j_constant(&m, &h)?.require()?.value;
    // moving the upper λ cutoff from 40 to 80 changes nothing visible, and
    // neither does a hundredfold tighter quadrature tolerance
    let lo = 1e-6;
    let uv =
        (j_truncated(&m, &h, lo, 80.0)?.value - j_truncated(&m, &h, lo, 40.0)?.value).abs() / j;
    let tight = j_constant_with(&m, &h, Tolerance::new(1e-17, 1e-12).with_max_cells(40_000))?.value;
    let stab = uv.max(((tight - j) / j).abs());
    Ok(((slope - target).abs(), stab, slope))
}

fn criterion_3() -> Result<Outcome> {
    let literal = match subcritical_constants(0.55) {
        Ok((err, stab, slope)) => format!("slope {slope:.8} (error {err:.1e}), J drift {stab:.1e}"),
        Err(e) => format!("literal run: {e}"),
    };
    let (err, stab, slope) = subcritical_constants(0.45)?;
    let companion = err < 1e-6 && stab < 1e-6;
    println!(
        "     companion H1 = 0.45: slope {slope:.8} vs +0.10 (error {err:.1e}), J cutoff drift {stab:.1e} -> {}",
        if companion { "PASS" } else { "FAIL" }
    );
    let pass = subcritical_constants(0.55).is_ok_and(|(e, s, _)| e < 1e-6 && s < 1e-6);
    ok(pass, literal)
}

fn criterion_4() -> Result<Outcome> {
    let h = HurstConfig::space_time(0.8, &[0.4])?;
    let closed = border_slope_closed_form(&h)?;
    let ns: Vec<f64> = (2..=10).map(f64::from).collect();
    let slope = |m: &Mollifier| -> Result<f64> {
        let cs: Vec<f64> = (2..=10).map(|n| c_n(m, &h, n)).collect::<Result<_>>()?;
        Ok(slope_fit(&ns, &cs)?.slope)
    };
    let g = slope(&Mollifier::gauss_gauss(1))?;
    let i = slope(&Mollifier::indicator_heat(1))?;
    let rel = (g / closed - 1.0).abs();
    let cross = (g / i - 1.0).abs();
    ok(
        rel < 0.05 && cross < 0.02,
        format!("gauss {g:.5}, indicator {i:.5}, closed form {closed:.5}; rel {rel:.2e}, cross {cross:.2e}"),
    )
}

fn criterion_5() -> Result<Outcome> {
    let h = HurstConfig::spatial(&[0.5, 0.5])?;
    let m = Mollifier::gauss_gauss(2);
    let closed = border_slope_closed_form_spatial(&h)?;
    let ns: Vec<f64> = (2..=8).map(f64::from).collect();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for smoothness in [1, 2] {
        let k = LocalizedHeatKernel::build(2, 24, smoothness)?;
        let cs: Vec<f64> = (2..=8)
            .map(|n| c_n_spatial_kernel(&m, &h, &k, n))
            .collect::<Result<_>>()?;
        let s = slope_fit(&ns, &cs)?.slope;
        worst = worst.max((s / closed - 1.0).abs());
        parts.push(format!("smoothness {smoothness}: {s:.5}"));
    }
    ok(
        worst < 0.05,
        format!(
            "{} vs ln2/pi = {closed:.5}; worst rel {worst:.2e}",
            parts.join(", ")
        ),
    )
}

fn criterion_6() -> Result<Outcome> {
    let (h, m, psi) = rough_d1();
    let ells: Vec<f64> = (0..=6).map(f64::from).collect();
    let vs: Vec<f64> = (0..=6)
        .map(|l| exact_var_first(&h, &m, 12, &psi, l))
        .collect::<Result<_>>()?;
    let slope = log2_slope(&ells, &vs)?;
    let target = 2.0 * (3.0 - 1.95);
    let mut pass = (slope - target).abs() < 0.1;
    let mut parts = vec![format!("slope {slope:.4} vs {target:.2}")];
    let grid = MomentLattice::default();
    for (ell, n) in [(0, 2), (1, 2), (1, 3)] {
        let model = SpectralModel::new(&h, &m, n, &grid.lattice(&h, n, ell)?)?;
        let mc = monte_carlo_moments(&model, 0.0, &psi, ell, 2000, 11)?;
        let exact = lattice_var_first(&model, &psi, ell)?;
        let cont = exact_var_first(&h, &m, n, &psi, ell)?;
        let z = (mc.first_var - exact) / mc.first_var_se;
        pass &= z.abs() < 3.0;
        parts.push(format!(
            "({ell},{n}) z={z:+.2} lattice/continuum={:.4}",
            exact / cont
        ));
    }
    ok(pass, parts.join("; "))
}

fn criterion_7() -> Result<Outcome> {
    let (h, m, psi) = rough_d1();
    let k = LocalizedHeatKernel::build(1, 24, 1)?;
    let grid = MomentLattice::default();
    let ells: Vec<f64> = (0..=5).map(f64::from).collect();
    let vs: Vec<f64> = (0..=5)
        .map(|l| Ok(exact_var_second(&h, &m, &k, 5, &psi, l, grid)?.second_moment))
        .collect::<Result<_>>()?;
    let slope = log2_slope(&ells, &vs)?;
    let bound = 4.0 * (2.0 - 1.95) + 0.2;
    let mut pass = slope <= bound;
    let mut parts = vec![format!("slope {slope:.4} <= {bound:.2}")];
    for (ell, n) in [(0, 2), (1, 3)] {
        let model = SpectralModel::new(&h, &m, n, &grid.lattice(&h, n, ell)?)?.with_kernel(&k)?;
        let c = renormalization(&h, &m, &k, n)?;
        let mc = monte_carlo_moments(&model, c, &psi, ell, 2000, 17)?;
        let exact = lattice_moments_second(&model, c, &psi, ell)?.variance;
        let z = (mc.second_var - exact) / mc.second_var_se;
        pass &= z.abs() < 3.0;
        parts.push(format!("({ell},{n}) z={z:+.2}"));
    }
    ok(pass, parts.join("; "))
}

fn criterion_8() -> Result<Outcome> {
    let (h, m, psi) = rough_d1();
    let k = LocalizedHeatKernel::build(1, 24, 1)?;
    let cfg = CauchyConfig {
        n: 4,
        coarse: vec![1, 2, 3],
        ells: vec![0, 1],
        alpha: -1.1,
        weight: Weight::new(1.0)?,
        horizon: 1.0,
        box_len: 4.0,
        replicas: 200,
        seed: 5,
        boxes: 1,
    };
    let t = cauchy_study(&h, &m, &k, &psi, &cfg)?;
    let pass = !t.slopes.is_empty() && t.slopes.iter().all(|&(_, s)| s < 0.0);
    let s: Vec<String> = t
        .slopes
        .iter()
        .map(|(l, s)| format!("ell {l}: {s:.3}"))
        .collect();
    ok(pass, format!("pairs (4,1),(4,2),(4,3); {}", s.join(", ")))
}

fn criterion_9() -> Result<Outcome> {
    let (h, m, psi) = rough_d1();
    let k = LocalizedHeatKernel::build(1, 24, 1)?;
    let l = Lattice::for_level(&h, 3, 4.0, 4.0)?;
    let f = SpectralModel::new(&h, &m, 3, &l)?
        .with_kernel(&k)?
        .sample(23)?;
    let st = test_stencil(&l, &psi, 1)?;
    let centre = Node(vec![l.nt / 2, l.nx / 2]);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut node = || Node(vec![rng.random_range(0..l.nt), rng.random_range(0..l.nx)]);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (a, b) = (node(), node());
        worst = worst.max(k_chen_check(&f, &st, &centre, &a, &b)?.rel_error);
    }
    ok(
        worst < 1e-10,
        format!("max relative residual {worst:.2e} over 20 pairs"),
    )
}

fn criterion_10() -> Result<Outcome> {
    let mut parts = Vec::new();
    // analytic cases on a small grid
    let l = Lattice::space_time(1, 512, 1.0 / 256.0, 128, 1.0 / 16.0)?;
    let opts = PamOptions {
        t_end: 1.0,
        dt: 1.0 / 128.0,
        snapshot_every: 8,
        allow_coarse: true,
    };
    let u0 = InitialCondition::Gaussian {
        centre: vec![4.0],
        width: 0.4,
    }
    .sample(1, 128, 1.0 / 16.0)?;
    let zero = LatticeField::from_samples(l.clone(), vec![0.0; l.len()])?;
    let heat = solve_pam(&zero, 0.0, &u0, &opts)?;
    let exact = heat_evolve(&u0, 1, 128, 1.0 / 16.0, 1.0)?;
    let e1 = heat
        .last()
        .iter()
        .zip(&exact)
        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    let konst = LatticeField::from_samples(l.clone(), vec![0.8; l.len()])?;
    let grown = solve_pam(&konst, 0.0, &vec![1.0; 128], &opts)?;
    let e2 = grown
        .last()
        .iter()
        .fold(0.0f64, |a, v| a.max((v - 0.8f64.exp()).abs()));
    parts.push(format!("heat {e1:.1e}, constant {e2:.1e}"));

    // shift versus subtracted noise on a sampled field
    let h = HurstConfig::space_time(0.75, &[0.2])?;
    let m = Mollifier::gauss_gauss(1);
    let k = LocalizedHeatKernel::build(1, 24, 1)?;
    let fl = Lattice::space_time(1, 1024, 1.0 / 2048.0, 128, 1.0 / 32.0)?;
    let f = SpectralModel::new(&h, &m, 4, &fl)?.sample(3)?;
    let c = renormalization(&h, &m, &k, 4)?;
    let mut g = f.clone();
    g.samples.iter_mut().for_each(|w| *w -= c);
    let ones = vec![1.0; 128];
    let so = PamOptions {
        t_end: 0.25,
        dt: 1.0 / 1024.0,
        snapshot_every: 16,
        allow_coarse: false,
    };
    let shift = solve_pam(&f, c, &ones, &so)?.sup_distance(&solve_pam(&g, 0.0, &ones, &so)?)?;
    parts.push(format!("shift identity {shift:.1e}"));

    let study = convergence_study(
        &h,
        &m,
        &k,
        &PamStudyConfig {
            levels: vec![3, 4, 5],
            t_end: 0.5,
            box_len: 4.0,
            seed: 1,
            initial: InitialCondition::Constant { value: 1.0 },
            snapshot_every: 16,
        },
    )?;
    let r = &study.rows;
    let trend = r[1].renormalized < r[0].renormalized && r[1].control > r[0].control;
    parts.push(format!(
        "renormalized {:.3} -> {:.3}, control {:.3} -> {:.3}",
        r[0].renormalized, r[1].renormalized, r[0].control, r[1].control
    ));
    ok(
        e1 < 1e-6 && e2 < 1e-6 && shift == 0.0 && trend,
        parts.join("; "),
    )
}

type Criterion = fn() -> Result<Outcome>;

fn main() {
    let criteria: [(u32, f64, Criterion); 10] = [
        (1, 60.0, criterion_1),
        (2, 300.0, criterion_2),
        (3, 300.0, criterion_3),
        (4, 600.0, criterion_4),
        (5, 600.0, criterion_5),
        (6, 1200.0, criterion_6),
        (7, 3600.0, criterion_7),
        (8, 1200.0, criterion_8),
        (9, 60.0, criterion_9),
        (10, 1800.0, criterion_10),
    ];
    let mut unexpected = 0;
    for (id, budget, run) in criteria {
        let start = Instant::now();
        let outcome = run().unwrap_or_else(|e: Error| Outcome {
            pass: false,
            detail: format!("error: {e}"),
        });
        let secs = start.elapsed().as_secs_f64();
        let within = secs <= budget;
        let known = KNOWN_FAILURES.iter().find(|(k, _)| *k == id);
        let status = if outcome.pass && within {
            "PASS"
        } else {
            "FAIL"
        };
        println!(
            "{status} criterion {id:>2} [{secs:.1}s / {budget:.0}s]: {}",
            outcome.detail
        );
        if status == "FAIL" {
            match known {
                Some((_, why)) => println!("     known failure: {why}"),
                None => unexpected += 1,
            }
        }
    }
    if unexpected > 0 {
        println!("{unexpected} unexpected failure(s)");
        std::process::exit(1);
    }
}
