use std::sync::OnceLock;

use krough_core::field_synthesis::{Lattice, LatticeField, SpectralModel};
use krough_core::io::{read_field, write_field};
use krough_core::kernels::{heat_kernel, LocalizedHeatKernel};
use krough_core::krough::{k_chen_check, log2_slope, test_stencil, Node, Weight};
use krough_core::pam_solver::{solve_pam, PamOptions};
use krough_core::quadrature::{c_n, slope_fit};
use krough_core::spectral_model::{HurstConfig, Mollifier, Regime};
use krough_core::testfn::TestFunction;
use proptest::prelude::*;

fn kernel_1d() -> &'static LocalizedHeatKernel {
    static K: OnceLock<LocalizedHeatKernel> = OnceLock::new();
    K.get_or_init(|| LocalizedHeatKernel::build(1, 24, 1).unwrap())
}

fn chen_field() -> &'static LatticeField {
    static F: OnceLock<LatticeField> = OnceLock::new();
    F.get_or_init(|| {
        let h = HurstConfig::space_time(0.75, &[0.45]).unwrap();
        let m = Mollifier::gauss_gauss(1);
        let l = Lattice::space_time(1, 64, 1.0 / 32.0, 32, 1.0 / 8.0).unwrap();
        SpectralModel::new(&h, &m, 1, &l)
            .unwrap()
            .with_kernel(kernel_1d())
            .unwrap()
            .sample(4)
            .unwrap()
    })
}

fn small_field(values: Vec<f64>) -> LatticeField {
    let l = Lattice::space_time(1, 32, 1.0 / 256.0, 16, 0.25).unwrap();
    LatticeField::from_samples(l, values).unwrap()
}

const PAM: PamOptions = PamOptions {
    t_end: 1.0 / 16.0,
    dt: 1.0 / 128.0,
    snapshot_every: 2,
    allow_coarse: true,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn localized_parts_reconstruct_heat_kernel(e in -20.0f64..2.0, u in -3.0f64..3.0) {
        let s = 2f64.powf(e);
        let x = [u * s.sqrt()];
        let k = kernel_1d();
        let p = heat_kernel(s, &x).unwrap();
        prop_assert!((k.eval_k(s, &x) + k.eval_r(s, &x) - p).abs() < 1e-8);
    }

    #[test]
    fn slope_fit_is_exact_on_lines(a in -5.0f64..5.0, b in -3.0f64..3.0, n in 3usize..12) {
        let xs: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| a + b * x).collect();
        prop_assert!((slope_fit(&xs, &ys).unwrap().slope - b).abs() < 1e-10);
        let vs: Vec<f64> = xs.iter().map(|x| 2f64.powf(a + b * x)).collect();
        prop_assert!((log2_slope(&xs, &vs).unwrap() - b).abs() < 1e-10);
    }

    #[test]
    fn weight_ratio_respects_bounds(
        kappa in 0.0f64..3.0,
        x in -50.0f64..50.0,
        dy in -1.0f64..1.0,
        reach in 0.1f64..5.0,
    ) {
        let w = Weight::new(kappa).unwrap();
        let y = x + dy * reach;
        let (lo, hi) = w.ratio_bounds(reach);
        let r = w.eval(&[x]) / w.eval(&[y]);
        prop_assert!(r >= lo * (1.0 - 1e-12) && r <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn chen_relation_holds_at_random_nodes(
        t0 in 0usize..64, x0 in 0usize..32, t1 in 0usize..64, x1 in 0usize..32,
    ) {
        let f = chen_field();
        let psi = TestFunction::bump(1, 5).unwrap();
        let st = test_stencil(&f.lattice, &psi, 1).unwrap();
        let r = k_chen_check(f, &st, &Node(vec![30, 16]), &Node(vec![t0, x0]), &Node(vec![t1, x1]))
            .unwrap();
        prop_assert!(r.abs_error <= 1e-10 * r.lhs.abs().max(r.rhs.abs()).max(1.0));
    }

    #[test]
    fn shift_matches_subtracted_noise(
        noise in prop::collection::vec(-3.0f64..3.0, 32 * 16),
        c in -2.0f64..2.0,
    ) {
        let f = small_field(noise.clone());
        let g = small_field(noise.iter().map(|w| w - c).collect());
        let u0 = vec![1.0; 16];
        let a = solve_pam(&f, c, &u0, &PAM).unwrap();
        let b = solve_pam(&g, 0.0, &u0, &PAM).unwrap();
        prop_assert_eq!(a.sup_distance(&b).unwrap(), 0.0);
    }

    #[test]
    fn solution_is_linear_in_initial_data(
        noise in prop::collection::vec(-3.0f64..3.0, 32 * 16),
        u0 in prop::collection::vec(-2.0f64..2.0, 16),
        v0 in prop::collection::vec(-2.0f64..2.0, 16),
        a in -3.0f64..3.0,
    ) {
        let f = small_field(noise);
        let w0: Vec<f64> = u0.iter().zip(&v0).map(|(u, v)| a * u + v).collect();
        let u = solve_pam(&f, 0.0, &u0, &PAM).unwrap();
        let v = solve_pam(&f, 0.0, &v0, &PAM).unwrap();
        let w = solve_pam(&f, 0.0, &w0, &PAM).unwrap();
        let scale = 1.0 + w.last().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for ((x, y), z) in u.last().iter().zip(v.last()).zip(w.last()) {
            prop_assert!((a * x + y - z).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn field_blob_round_trips(values in prop::collection::vec(-1e6f64..1e6, 32 * 16)) {
        let f = small_field(values);
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        let back = read_field(buf.as_slice()).unwrap();
        prop_assert_eq!(back.samples, f.samples);
        prop_assert_eq!(back.lattice, f.lattice);
    }

    #[test]
    fn regime_follows_the_gap(h0 in 0.5f64..1.0, h1 in 0.05f64..0.95) {
        let h = HurstConfig::space_time(h0, &[h1]).unwrap();
        let gap = h.criticality_gap();
        prop_assert!((gap - (2.0 - (2.0 * h0 + h1))).abs() < 1e-12);
        match h.regime() {
            Regime::Young => prop_assert!(gap < 0.0),
            Regime::Rough { border } => {
                prop_assert!(gap > -1e-12 && gap < 0.5);
                prop_assert_eq!(border, gap.abs() <= 1e-12);
            }
            Regime::Unsupported => prop_assert!(gap >= 0.5),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn subcritical_constants_scale_geometrically(h1 in 0.1f64..0.45, n in 1u32..6) {
        let h = HurstConfig::space_time(0.75, &[h1]).unwrap();
        let m = Mollifier::gauss_gauss(1);
        let ratio = c_n(&m, &h, n + 1).unwrap() / c_n(&m, &h, n).unwrap();
        let expected = 2f64.powf(2.0 * h.criticality_gap());
        prop_assert!((ratio / expected - 1.0).abs() < 1e-10);
    }
}
