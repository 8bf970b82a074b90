//! Tensor polynomial bumps, the parabolic scaling operator, dyadic lattices
//! and the oscillatory functionals T^{(i)} and Q^{(i)}.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{integrate_power, Tolerance};
use crate::special::{composite_gl, scaled_spherical_bessel, GaussLegendre};
use crate::spectral_model::HurstConfig;

/// One-dimensional factor (1 - u²)^k on [-1, 1], optionally multiplied by
/// cos(ω u).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BumpFactor {
    pub k: usize,
    pub omega: f64,
    /// Coefficients of (1-u²)^k in powers of u.
    coeffs: Vec<f64>,
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |a, i| a * i as f64)
}

impl BumpFactor {
    pub fn new(k: usize, omega: f64) -> Self {
        let mut coeffs = vec![0.0; 2 * k + 1];
        for j in 0..=k {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            coeffs[2 * j] = sign * binom(k, j);
        }
        BumpFactor { k, omega, coeffs }
    }

    /// j-th derivative of the polynomial part.
    fn poly_deriv(&self, j: usize, u: f64) -> f64 {
        if u.abs() > 1.0 {
            return 0.0;
        }
        self.coeffs
            .iter()
            .enumerate()
            .skip(j)
            .map(|(p, &c)| {
                c * (0..j).map(|i| (p - i) as f64).product::<f64>() * u.powi((p - j) as i32)
            })
            .sum()
    }

    /// j-th derivative of b(u) cos(ω u), by Leibniz.
    pub fn deriv(&self, j: usize, u: f64) -> f64 {
        if u.abs() > 1.0 {
            return 0.0;
        }
        if self.omega == 0.0 {
            return self.poly_deriv(j, u);
        }
        let w = self.omega;
        (0..=j)
            .map(|i| {
                // (d/du)^{j-i} cos(ωu) = ω^{j-i} cos(ωu + (j-i)π/2)
                let m = (j - i) as f64;
                binom(j, i) * self.poly_deriv(i, u) * w.powf(m) * (w * u + 0.5 * PI * m).cos()
            })
            .sum()
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.deriv(0, u)
    }

    /// sup |b^{(j)}| by dense sampling of the exact polynomial (Leibniz bound
    /// for the modulated variant).
    pub fn sup_deriv(&self, j: usize) -> f64 {
        let sample = |f: &dyn Fn(f64) -> f64| {
            (0..=4000)
                .map(|i| f(-1.0 + i as f64 / 2000.0).abs())
                .fold(0.0, f64::max)
        };
        if self.omega == 0.0 {
            return sample(&|u| self.poly_deriv(j, u)) * (1.0 + 1e-9);
        }
        (0..=j)
            .map(|i| {
                binom(j, i)
                    * sample(&|u| self.poly_deriv(i, u))
                    * self.omega.abs().powi((j - i) as i32)
            })
            .sum::<f64>()
            * (1.0 + 1e-9)
    }

    /// ∫ b(u) e^{-iλu} du (real, since b is even).
    pub fn fourier(&self, lambda: f64) -> f64 {
        let base = |l: f64| {
            factorial(self.k) * 2f64.powi(self.k as i32 + 1) * scaled_spherical_bessel(self.k, l)
        };
        if self.omega == 0.0 {
            base(lambda)
        } else {
            0.5 * (base(lambda - self.omega) + base(lambda + self.omega))
        }
    }

    /// ∫ |b'(u)| du, split at the kinks of |b'|.
    pub fn abs_derivative_mass(&self) -> f64 {
        let (x, w) = composite_gl(
            -1.0,
            1.0,
            64 + (self.omega.abs() * 2.0 / PI).ceil() as usize * 4,
            16,
        );
        x.iter()
            .zip(&w)
            .map(|(&u, &wt)| wt * self.deriv(1, u).abs())
            .sum()
    }
}

/// ψ(t, x) = C b_0(t) ∏ b_i(x_i) with C chosen so that every derivative of
/// order at most 2(d+1) is bounded by one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestFunction {
    d: usize,
    factors: Vec<BumpFactor>,
    scale: f64,
    label: String,
}

impl TestFunction {
    /// Plain tensor bump with smoothness order k; requires k >= 2(d+1)+1.
    pub fn bump(d: usize, k: usize) -> Result<Self> {
        Self::with_factors(
            d,
            vec![BumpFactor::new(k, 0.0); d + 1],
            format!("bump-k{k}"),
        )
    }

    /// Time factor modulated by cos(ω t).
    pub fn modulated(d: usize, k: usize, omega: f64) -> Result<Self> {
        let mut f = vec![BumpFactor::new(k, 0.0); d + 1];
        f[0] = BumpFactor::new(k, omega);
        Self::with_factors(d, f, format!("bump-k{k}-mod{omega}"))
    }

    /// The shipped family: k ∈ {2d+3, 2d+4, 2d+5} plus one modulated member.
    pub fn family(d: usize) -> Result<Vec<Self>> {
        let k0 = 2 * (d + 1) + 1;
        Ok(vec![
            Self::bump(d, k0)?,
            Self::bump(d, k0 + 1)?,
            Self::bump(d, k0 + 2)?,
            Self::modulated(d, k0, 3.0)?,
        ])
    }

    fn with_factors(d: usize, factors: Vec<BumpFactor>, label: String) -> Result<Self> {
        let order = 2 * (d + 1);
        if let Some(f) = factors.iter().find(|f| f.k < order + 1) {
            return Err(Error::Degenerate(format!(
                "smoothness k = {} below 2(d+1)+1 = {}",
                f.k,
                order + 1
            )));
        }
        let sups: Vec<Vec<f64>> = factors
            .iter()
            .map(|f| (0..=order).map(|j| f.sup_deriv(j)).collect())
            .collect();
        // max over multi-indices with |α| <= order of ∏ sup|b_i^{(α_i)}|
        let mut best = vec![0.0f64; order + 1];
        best[0] = 1.0;
        for s in &sups {
            let mut next = vec![0.0f64; order + 1];
            for (used, &b) in best.iter().enumerate() {
                if b == 0.0 {
                    continue;
                }
                for (j, &m) in s.iter().enumerate().take(order + 1 - used) {
                    next[used + j] = next[used + j].max(b * m);
                }
            }
            best = next;
        }
        let m = best.iter().fold(0.0f64, |a, &v| a.max(v));
        Ok(TestFunction {
            d,
            factors,
            scale: 1.0 / m,
            label,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn normalization(&self) -> f64 {
        self.scale
    }

    pub fn factors(&self) -> &[BumpFactor] {
        &self.factors
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        self.deriv(&vec![0; self.d + 1], t, x)
    }

    /// ∂^α ψ with α = (α_t, α_1, ..).
    pub fn deriv(&self, alpha: &[usize], t: f64, x: &[f64]) -> f64 {
        let mut v = self.scale * self.factors[0].deriv(alpha[0], t);
        for i in 0..self.d {
            if v == 0.0 {
                return 0.0;
            }
            v *= self.factors[i + 1].deriv(alpha[i + 1], x[i]);
        }
        v
    }

    /// Fψ(λ, ξ) as a product of one-dimensional transforms.
    pub fn fourier(&self, lambda: f64, xi: &[f64]) -> f64 {
        let mut v = self.scale * self.factors[0].fourier(lambda);
        for i in 0..self.d {
            v *= self.factors[i + 1].fourier(xi[i]);
        }
        v
    }

    pub fn integral(&self) -> f64 {
        self.fourier(0.0, &vec![0.0; self.d])
    }

    /// max over sampled points and all |α| <= 2(d+1) of |∂^α ψ|.
    pub fn sampled_derivative_max(&self, per_axis: usize) -> f64 {
        let order = 2 * (self.d + 1);
        let mut best = 0.0f64;
        let grid: Vec<f64> = (0..per_axis)
            .map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / per_axis as f64)
            .collect();
        let mut alphas = vec![vec![]];
        for _ in 0..=self.d {
            alphas = alphas
                .into_iter()
                .flat_map(|a: Vec<usize>| {
                    let used: usize = a.iter().sum();
                    (0..=order - used).map(move |j| {
                        let mut b = a.clone();
                        b.push(j);
                        b
                    })
                })
                .collect();
        }
        for alpha in &alphas {
            // separable: max of the product is the product of the maxima
            let mut m = self.scale;
            for (i, &a) in alpha.iter().enumerate() {
                m *= grid
                    .iter()
                    .map(|&u| self.factors[i].deriv(a, u).abs())
                    .fold(0.0, f64::max);
            }
            best = best.max(m);
        }
        best
    }
}

/// S^δ_{s,x} ψ.
#[derive(Debug, Clone)]
pub struct ScaledTest<'a> {
    pub psi: &'a TestFunction,
    pub delta: f64,
    pub s: f64,
    pub x: Vec<f64>,
}

pub fn scale_translate<'a>(
    psi: &'a TestFunction,
    delta: f64,
    s: f64,
    x: &[f64],
) -> Result<ScaledTest<'a>> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Degenerate(format!(
            "scale δ = {delta} outside (0, 1]"
        )));
    }
    if x.len() != psi.d {
        return Err(Error::Degenerate("base point dimension mismatch".into()));
    }
    Ok(ScaledTest {
        psi,
        delta,
        s,
        x: x.to_vec(),
    })
}

impl ScaledTest<'_> {
    /// δ^{-(d+2)} ψ(δ^{-2}(t-s), δ^{-1}(y-x)).
    pub fn eval(&self, t: f64, y: &[f64]) -> f64 {
        let d = self.psi.d;
        let inv = 1.0 / self.delta;
        let u: Vec<f64> = y.iter().zip(&self.x).map(|(a, b)| (a - b) * inv).collect();
        inv.powi(d as i32 + 2) * self.psi.eval((t - self.s) * inv * inv, &u)
    }

    /// e^{-i(λs + ξ·x)} Fψ(δ²λ, δξ).
    pub fn fourier(&self, lambda: f64, xi: &[f64]) -> Complex64 {
        let d2 = self.delta * self.delta;
        let sx: Vec<f64> = xi.iter().map(|v| v * self.delta).collect();
        let phase = lambda * self.s + xi.iter().zip(&self.x).map(|(a, b)| a * b).sum::<f64>();
        Complex64::from_polar(self.psi.fourier(d2 * lambda, &sx), -phase)
    }

    /// Axis-aligned support box: [s - δ², s + δ²] × ∏ [x_i - δ, x_i + δ].
    pub fn support(&self) -> Vec<(f64, f64)> {
        let d2 = self.delta * self.delta;
        let mut v = vec![(self.s - d2, self.s + d2)];
        v.extend(self.x.iter().map(|&c| (c - self.delta, c + self.delta)));
        v
    }
}

/// Λ^n = {(4^{-n} k_0, 2^{-n} k)} ∩ [-T, T] × ∏ [-B_i, B_i].
pub fn dyadic_lattice(n: u32, t: f64, half_box: &[f64]) -> Result<Vec<Vec<f64>>> {
    if !(t >= 0.0) || half_box.is_empty() || half_box.iter().any(|b| !(*b >= 0.0)) {
        return Err(Error::MalformedGrid(format!(
            "empty box: T = {t}, half widths {half_box:?}"
        )));
    }
    let ht = 4f64.powi(-(n as i32));
    let hx = 2f64.powi(-(n as i32));
    let axis = |h: f64, b: f64| -> Vec<f64> {
        let m = (b / h + 1e-9).floor() as i64;
        (-m..=m).map(|k| k as f64 * h).collect()
    };
    let mut pts: Vec<Vec<f64>> = axis(ht, t).into_iter().map(|v| vec![v]).collect();
    for &b in half_box {
        let ax = axis(hx, b);
        pts = pts
            .into_iter()
            .flat_map(|p| {
                ax.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    Ok(pts)
}

/// ∫_0^y e^{-iμz} dz = y e^{-iμy/2} sinc(μy/2).
fn e_int(mu: f64, y: f64) -> Complex64 {
    let h = 0.5 * mu * y;
    let s = if h.abs() < 1e-8 {
        1.0 - h * h / 6.0
    } else {
        h.sin() / h
    };
    Complex64::from_polar(y * s, -h)
}

/// ∫_0^y dz e^{-iλ̃z} ∫_0^z dw e^{-iλw}.
fn q_inner(lambda: f64, lambda_t: f64, y: f64) -> Complex64 {
    if (lambda * y).abs() >= 0.5 {
        (e_int(lambda_t, y) - e_int(lambda + lambda_t, y)) / Complex64::new(0.0, lambda)
    } else {
        let panels = 1 + ((lambda_t.abs() + lambda.abs()) * y.abs() / PI).ceil() as usize;
        let (z, w) = composite_gl(0.0, y, panels, 16);
        z.iter()
            .zip(&w)
            .map(|(&zz, &ww)| Complex64::from_polar(ww, -lambda_t * zz) * e_int(lambda, zz))
            .sum()
    }
}

impl TestFunction {
    fn axis_moment(&self, i: usize, g: &dyn Fn(f64) -> f64, freq: f64) -> f64 {
        let f = &self.factors[i];
        let panels = 16 + ((freq.abs() + f.omega.abs()) / PI).ceil() as usize * 2;
        // split at 0, where |b'| has a kink
        let (x, w) = composite_gl(-1.0, 0.0, panels, 16);
        let left: f64 = x
            .iter()
            .zip(&w)
            .map(|(&u, &wt)| wt * f.deriv(1, u).abs() * g(u))
            .sum();
        let (x, w) = composite_gl(0.0, 1.0, panels, 16);
        let right: f64 = x
            .iter()
            .zip(&w)
            .map(|(&u, &wt)| wt * f.deriv(1, u).abs() * g(u))
            .sum();
        left + right
    }

    fn other_masses(&self, i: usize) -> f64 {
        (0..=self.d)
            .filter(|&j| j != i)
            .map(|j| self.factors[j].abs_derivative_mass())
            .product::<f64>()
            * self.scale
    }

    /// T^{(i)}(λ), i = 0 for time.
    pub fn t_functional(&self, i: usize, lambda: f64) -> Result<f64> {
        if i > self.d {
            return Err(Error::Degenerate(format!("axis {i} out of range")));
        }
        let p = (self.d + 1) as i32;
        let g = |y: f64| e_int(lambda, y).norm().powi(p);
        let v = self.other_masses(i) * self.axis_moment(i, &g, lambda);
        Ok(v.powf(1.0 / p as f64))
    }

    /// Q^{(i)}(λ, λ̃).
    pub fn q_functional(&self, i: usize, lambda: f64, lambda_t: f64) -> Result<f64> {
        if i > self.d {
            return Err(Error::Degenerate(format!("axis {i} out of range")));
        }
        let p = (self.d + 1) as i32;
        let g = |y: f64| q_inner(lambda, lambda_t, y).norm().powi(p);
        let v = self.other_masses(i) * self.axis_moment(i, &g, lambda.abs() + lambda_t.abs());
        Ok(v.powf(1.0 / p as f64))
    }
}

/// Cutoff-stability report: integral values over growing truncations and
/// their successive increments.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub label: String,
    pub cutoffs: Vec<f64>,
    pub values: Vec<f64>,
    pub increments: Vec<f64>,
    pub passes: bool,
}

impl StabilityReport {
    fn from_values(label: String, cutoffs: Vec<f64>, values: Vec<f64>) -> Self {
        let increments: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        // geometric decay of the last few increments
        let tail = &increments[increments.len().saturating_sub(4)..];
        let decaying = tail
            .windows(2)
            .all(|w| w[1] <= 0.85 * w[0] || w[1] <= 1e-12 * values.last().unwrap().abs());
        let small = increments
            .last()
            .map(|&d| d <= 0.05 * values.last().unwrap().abs())
            .unwrap_or(false);
        StabilityReport {
            label,
            cutoffs,
            values,
            increments,
            passes: decaying && small,
        }
    }
}

/// Nodes and weights for ∫_lo^hi g(x) x^e dx split into dyadic shells, with
/// a power map on the first piece when lo = 0.
fn weighted_rule(lo: f64, hi: f64, e: f64, per_shell: usize) -> (Vec<f64>, Vec<f64>) {
    let rule = GaussLegendre::get(per_shell);
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    let mut a = lo;
    if lo == 0.0 {
        // u = x^{e+1}/(e+1) on [0, min(1, hi)]
        let b = hi.min(1.0);
        let p = e + 1.0;
        for (u, w) in rule.on_interval(0.0, b.powf(p) / p) {
            xs.push((p * u).powf(1.0 / p));
            ws.push(w);
        }
        a = b;
    }
    while a < hi {
        let b = (2.0 * a.max(0.5)).min(hi);
        let panels = 1 + ((b - a) / 2.0).ceil() as usize;
        let (x, w) = composite_gl(a, b, panels, per_shell);
        for (xv, wv) in x.into_iter().zip(w) {
            xs.push(xv);
            ws.push(wv * xv.powf(e));
        }
        a = b;
    }
    (xs, ws)
}

/// Nested-cutoff study of the three integrability criteria for the T and Q
/// functionals along axis `axis`. `exponents` holds (β1, β2) or (λ1, λ2).
pub fn check_tq_integrability(
    psi: &TestFunction,
    axis: usize,
    criterion: u8,
    exponents: (f64, f64),
    max_level: u32,
) -> Result<StabilityReport> {
    let (e1, e2) = exponents;
    let cutoffs: Vec<f64> = (1..=max_level).map(|k| 2f64.powi(k as i32)).collect();
    let mut values = Vec::with_capacity(cutoffs.len());
    let rmax = *cutoffs.last().unwrap();
    match criterion {
        1 => {
            // ∫∫ Q(x1, x2)² |x1|^{1-β1} |x2|^{1-β2}; Q is symmetric under
            // (x1, x2) -> (-x1, -x2), so two quadrants suffice.
            let (x1, w1) = weighted_rule(0.0, rmax, 1.0 - e1, 12);
            let (x2, w2) = weighted_rule(0.0, rmax, 1.0 - e2, 12);
            let rows: Vec<Vec<(f64, f64)>> = crate::par::map_slice(&x1, |&a| {
                x2.iter()
                    .map(|&b| {
                        let pp = psi.q_functional(axis, a, b).unwrap_or(f64::NAN).powi(2);
                        let pm = psi.q_functional(axis, a, -b).unwrap_or(f64::NAN).powi(2);
                        (pp, pm)
                    })
                    .collect()
            });
            for &c in &cutoffs {
                let mut s = 0.0;
                for (i, &a) in x1.iter().enumerate() {
                    if a > c {
                        continue;
                    }
                    for (j, &b) in x2.iter().enumerate() {
                        if b <= c {
                            s += w1[i] * w2[j] * (rows[i][j].0 + rows[i][j].1);
                        }
                    }
                }
                values.push(2.0 * s);
            }
        }
        2 | 3 => {
            // ∫ dx1 ∫ dx2 T(x1 + x2)² |x1|^{1-λ1} |x2|^{1-λ2}, with
            // |x1| <= 1 (item 2) or 1 <= |x1| <= cutoff (item 3); T is even.
            let (x1, w1) = if criterion == 2 {
                weighted_rule(0.0, 1.0, 1.0 - e1, 24)
            } else {
                weighted_rule(1.0, rmax, 1.0 - e1, 12)
            };
            let (x2, w2) = weighted_rule(0.0, rmax, 1.0 - e2, 12);
            let rows: Vec<Vec<f64>> = crate::par::map_slice(&x1, |&a| {
                x2.iter()
                    .map(|&b| {
                        psi.t_functional(axis, a + b).unwrap_or(f64::NAN).powi(2)
                            + psi.t_functional(axis, a - b).unwrap_or(f64::NAN).powi(2)
                    })
                    .collect()
            });
            for &c in &cutoffs {
                let mut s = 0.0;
                for (i, &a) in x1.iter().enumerate() {
                    if a > c {
                        continue;
                    }
                    for (j, &b) in x2.iter().enumerate() {
                        if b <= c {
                            s += w1[i] * w2[j] * rows[i][j];
                        }
                    }
                }
                values.push(2.0 * s);
            }
        }
        _ => return Err(Error::Degenerate(format!("unknown criterion {criterion}"))),
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("T/Q integrability table".into()));
    }
    let label = format!("criterion {criterion} axis {axis} exponents ({e1}, {e2})");
    Ok(StabilityReport::from_values(label, cutoffs, values))
}

/// ∫_{[-R, R]^{1+d}} N(λ, ξ) |Fψ(λ, ξ)|, a product of one-dimensional
/// weighted integrals of the factor transforms, over cutoffs R = 2^k.
pub fn check_psi_weight_integral(
    psi: &TestFunction,
    hurst: &HurstConfig,
    max_level: u32,
) -> Result<StabilityReport> {
    let exps = hurst.weight_exponents();
    if exps.len() != psi.d + 1 {
        return Err(Error::Degenerate(
            "space-time configuration needed with matching d".into(),
        ));
    }
    let cutoffs: Vec<f64> = (0..=max_level).map(|k| 2f64.powi(k as i32)).collect();
    let tol = Tolerance::new(1e-300, 1e-12);
    let mut values = Vec::new();
    for &c in &cutoffs {
        let mut v = psi.scale;
        for (i, &a) in exps.iter().enumerate() {
            let f = &psi.factors[i];
            let pieces = (c / PI).ceil().max(1.0) as usize;
            let mut s = 0.0;
            for p in 0..pieces {
                let lo = c * p as f64 / pieces as f64;
                let hi = c * (p + 1) as f64 / pieces as f64;
                s += integrate_power(|u: f64| f.fourier(u).abs(), a, lo, hi, tol).value;
            }
            v *= 2.0 * s;
        }
        values.push(v);
    }
    Ok(StabilityReport::from_values(
        format!("psi weight integral {}", hurst.label()),
        cutoffs,
        values,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_fourier_at_zero_is_mass() {
        let f = BumpFactor::new(5, 0.0);
        // ∫ (1-u²)^5 = 2·(10!!)/(11!!) = 512/693
        assert!((f.fourier(0.0) - 512.0 / 693.0).abs() < 1e-14);
        let (x, w) = composite_gl(-1.0, 1.0, 40, 16);
        for &l in &[0.5, 3.0, 17.0] {
            let num: f64 = x
                .iter()
                .zip(&w)
                .map(|(&u, &wt)| wt * f.eval(u) * (l * u).cos())
                .sum();
            assert!((num - f.fourier(l)).abs() < 1e-13);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let f = BumpFactor::new(7, 2.0);
        let h = 1e-5;
        for &u in &[-0.6, 0.1, 0.8] {
            for j in 0..4 {
                let fd = (f.deriv(j, u + h) - f.deriv(j, u - h)) / (2.0 * h);
                assert!(
                    (fd - f.deriv(j + 1, u)).abs() < 1e-5 * (1.0 + fd.abs()),
                    "{j} {u}"
                );
            }
        }
    }

    #[test]
    fn normalization_bounds_derivatives() {
        for psi in TestFunction::family(1).unwrap() {
            let m = psi.sampled_derivative_max(400);
            assert!(m <= 1.0 + 1e-12 && m > 0.5, "{} {m}", psi.label());
        }
    }

    #[test]
    fn low_smoothness_rejected() {
        assert!(TestFunction::bump(1, 4).is_err());
    }

    #[test]
    fn lattice_small_case() {
        let p = dyadic_lattice(0, 1.0, &[1.0]).unwrap();
        assert_eq!(p.len(), 9);
        assert!(dyadic_lattice(0, -1.0, &[1.0]).is_err());
    }

    #[test]
    fn t_at_zero_reduces_to_moment() {
        let psi = TestFunction::bump(1, 5).unwrap();
        let t0 = psi.t_functional(1, 0.0).unwrap();
        let (x, w) = composite_gl(-1.0, 1.0, 400, 8);
        let d = |u: f64| psi.factors[0].deriv(1, u).abs();
        let mass: f64 = x.iter().zip(&w).map(|(&u, &wt)| wt * d(u)).sum();
        let mom: f64 = x.iter().zip(&w).map(|(&u, &wt)| wt * d(u) * u * u).sum();
        assert!((t0 - (psi.scale * mass * mom).sqrt()).abs() < 1e-7);
    }

    #[test]
    fn q_inner_branches_agree() {
        for &(l, lt, y) in &[(0.4999, 3.0, 1.0), (0.5001, -2.0, 1.0), (1e-3, 40.0, 0.7)] {
            let a = q_inner(l, lt, y);
            let panels = 200;
            let (z, w) = composite_gl(0.0, y, panels, 16);
            let b: Complex64 = z
                .iter()
                .zip(&w)
                .map(|(&zz, &ww)| Complex64::from_polar(ww, -lt * zz) * e_int(l, zz))
                .sum();
            assert!((a - b).norm() < 1e-12, "{l} {lt}");
        }
    }
}
