//! Same workloads through the rayon path and the forced sequential path.
//! On a single-core machine the two should be close; the gap is the pool
//! overhead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use krough_core::field_synthesis::{KernelMultiplier, Lattice, SpectralModel};
use krough_core::kernels::LocalizedHeatKernel;
use krough_core::krough::{monte_carlo_moments, renormalization, MomentLattice};
use krough_core::par;
use krough_core::spectral_model::{HurstConfig, Mollifier};
use krough_core::testfn::TestFunction;

fn modes() -> [(&'static str, bool); 2] {
    [("parallel", false), ("sequential", true)]
}

fn monte_carlo(c: &mut Criterion) {
    let h = HurstConfig::space_time(0.75, &[0.45]).unwrap();
    let m = Mollifier::gauss_gauss(1);
    let k = LocalizedHeatKernel::build(1, 24, 1).unwrap();
    let psi = TestFunction::bump(1, 5).unwrap();
    let l = MomentLattice::default().lattice(&h, 2, 0).unwrap();
    let model = SpectralModel::new(&h, &m, 2, &l)
        .unwrap()
        .with_kernel(&k)
        .unwrap();
    let cn = renormalization(&h, &m, &k, 2).unwrap();
    let mut g = c.benchmark_group("monte_carlo_moments");
    g.sample_size(10);
    for (name, seq) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::force_sequential(seq);
            b.iter(|| monte_carlo_moments(&model, cn, &psi, 0, 64, 3).unwrap());
        });
    }
    par::force_sequential(false);
    g.finish();
}

fn multiplier(c: &mut Criterion) {
    let k = LocalizedHeatKernel::build(1, 24, 1).unwrap();
    let l = Lattice::space_time(1, 256, 1.0 / 64.0, 128, 1.0 / 32.0).unwrap();
    let mut g = c.benchmark_group("kernel_multiplier");
    g.sample_size(10);
    for (name, seq) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::force_sequential(seq);
            b.iter(|| KernelMultiplier::sampled(&k, &l).unwrap());
        });
    }
    par::force_sequential(false);
    g.finish();
}

criterion_group!(benches, monte_carlo, multiplier);
criterion_main!(benches);
