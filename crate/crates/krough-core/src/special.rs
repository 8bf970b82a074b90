//! Special functions and fixed quadrature rules used across the crate.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

pub use statrs::function::gamma::{gamma, ln_gamma};

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    fn compute(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, z);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Cached rule with `n` points.
    pub fn get(n: usize) -> Arc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        guard
            .entry(n)
            .or_insert_with(|| Arc::new(GaussLegendre::compute(n)))
            .clone()
    }

    /// Nodes and weights mapped to [a, b].
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(self.weights.iter())
            .map(move |(x, w)| (c + h * x, h * w))
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss-Legendre nodes on [a, b] with `panels` equal panels of
/// `order` points each.
pub fn composite_gl(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let rule = GaussLegendre::get(order);
    let mut xs = Vec::with_capacity(panels * order);
    let mut ws = Vec::with_capacity(panels * order);
    let h = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (x, w) in rule.on_interval(lo, lo + h) {
            xs.push(x);
            ws.push(w);
        }
    }
    (xs, ws)
}

/// Bessel function of the first kind of order zero.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x < 12.0 {
        let q = -0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..200 {
            let kf = k as f64;
            term *= q / (kf * kf);
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        sum
    } else {
        // Hankel asymptotic expansion, truncated at its smallest term.
        let mut a: f64 = 1.0;
        let mut p = 0.0;
        let mut q = 0.0;
        let mut last = f64::INFINITY;
        let mut xpow = 1.0;
        for k in 0..60 {
            let term: f64 = a / xpow;
            if term.abs() > last {
                break;
            }
            last = term.abs();
            match k % 4 {
                0 => p += term,
                1 => q += term,
                2 => p -= term,
                _ => q -= term,
            }
            let kf = (k + 1) as f64;
            a *= -(2.0 * kf - 1.0).powi(2) / (8.0 * kf);
            xpow *= x;
        }
        let chi = x - 0.25 * PI;
        (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}

/// Spherical Bessel function j_k(x) for x >= 0.
pub fn spherical_bessel_j(k: usize, x: f64) -> f64 {
    let x = x.abs();
    if x < 1e-3 || (x < 1.0 + 0.5 * k as f64 && x < 3.0) {
        // x^k/(2k+1)!! times a rapidly convergent series.
        return x.powi(k as i32) * scaled_series(k, x);
    }
    let j0 = x.sin() / x;
    if k == 0 {
        return j0;
    }
    let j1 = x.sin() / (x * x) - x.cos() / x;
    if x > k as f64 {
        let (mut a, mut b) = (j0, j1);
        for l in 1..k {
            let c = (2 * l + 1) as f64 / x * b - a;
            a = b;
            b = c;
        }
        b
    } else {
        // Miller's downward recurrence, normalized against j0 or j1.
        let start = k + 20 + (x as usize);
        let mut next = 0.0;
        let mut cur = 1e-300;
        let mut at_k = 0.0;
        let mut v1 = 0.0;
        for l in (0..start).rev() {
            let prev = (2 * l + 3) as f64 / x * cur - next;
            next = cur;
            cur = prev;
            if cur.abs() > 1e250 {
                cur *= 1e-250;
                next *= 1e-250;
                at_k *= 1e-250;
                v1 *= 1e-250;
            }
            if l == k {
                at_k = cur;
            }
            if l == 1 {
                v1 = cur;
            }
        }
        let v0 = cur;
        if j0.abs() > j1.abs() {
            at_k * j0 / v0
        } else {
            at_k * j1 / v1
        }
    }
}

/// x^{-k} j_k(x), finite at the origin.
pub fn scaled_spherical_bessel(k: usize, x: f64) -> f64 {
    let x = x.abs();
    if x < 3.0 {
        scaled_series(k, x)
    } else {
        spherical_bessel_j(k, x) / x.powi(k as i32)
    }
}

fn scaled_series(k: usize, x: f64) -> f64 {
    let mut dfact = 1.0;
    for i in 0..=k {
        dfact *= (2 * i + 1) as f64;
    }
    let q = -0.5 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for m in 1..200 {
        term *= q / (m as f64 * (2 * k + 2 * m + 1) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum / dfact
}

/// sin(x)/x with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Surface integral of prod |w_i|^{a_i} over the unit sphere in R^d.
pub fn sphere_power_integral(a: &[f64]) -> f64 {
    let d = a.len() as f64;
    let s: f64 = a.iter().sum();
    let num: f64 = a.iter().map(|&ai| gamma(0.5 * (ai + 1.0))).product();
    2.0 * num / gamma(0.5 * (d + s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let r = GaussLegendre::get(7);
        let v: f64 = r.on_interval(0.0, 2.0).map(|(x, w)| w * x.powi(13)).sum();
        assert!((v - 2f64.powi(14) / 14.0).abs() < 1e-9);
        let big = GaussLegendre::get(300);
        let s: f64 = big.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn j0_matches_integral_representation() {
        for &x in &[0.0, 0.3, 2.4048255576957727, 7.9, 11.99, 12.01, 30.0, 123.4] {
            let n = 400;
            let v: f64 = (0..n)
                .map(|i| {
                    let t = PI * (i as f64 + 0.5) / n as f64;
                    (x * t.sin()).cos()
                })
                .sum::<f64>()
                / n as f64;
            assert!(
                (bessel_j0(x) - v).abs() < 1e-10,
                "x={x}: {} vs {v}",
                bessel_j0(x)
            );
        }
    }

    #[test]
    fn spherical_bessel_matches_closed_forms() {
        for &x in &[0.01f64, 0.5, 2.0, 5.0, 9.0, 40.0] {
            let j1 = x.sin() / (x * x) - x.cos() / x;
            let j2 = (3.0 / (x * x) - 1.0) * x.sin() / x - 3.0 * x.cos() / (x * x);
            assert!((spherical_bessel_j(1, x) - j1).abs() < 1e-10);
            assert!((spherical_bessel_j(2, x) - j2).abs() < 1e-10);
        }
    }

    #[test]
    fn spherical_bessel_downward_agrees_with_quadrature() {
        // x^{-k} j_k(x) = (1/(2^{k+1} k!)) int_{-1}^{1} (1-u^2)^k cos(xu) du
        let rule = GaussLegendre::get(200);
        for k in [5usize, 8, 11] {
            let mut fact = 1.0;
            for i in 1..=k {
                fact *= i as f64;
            }
            for &x in &[0.2, 1.5, 4.0, 7.5, 10.0, 25.0, 60.0] {
                let q: f64 = rule
                    .on_interval(-1.0, 1.0)
                    .map(|(u, w)| w * (1.0 - u * u).powi(k as i32) * (x * u).cos())
                    .sum();
                let expected = q / (2f64.powi(k as i32 + 1) * fact);
                let got = scaled_spherical_bessel(k, x);
                assert!(
                    (got - expected).abs() < 1e-12 * expected.abs().max(1e-6),
                    "k={k} x={x}: {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn sphere_integral_known_values() {
        assert!((sphere_power_integral(&[0.0]) - 2.0).abs() < 1e-12);
        assert!((sphere_power_integral(&[0.0, 0.0]) - 2.0 * PI).abs() < 1e-12);
        assert!((sphere_power_integral(&[0.0, 0.0, 0.0]) - 4.0 * PI).abs() < 1e-12);
    }
}
