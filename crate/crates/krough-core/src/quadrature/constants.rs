//! Renormalization constants: the integral J, the sequence c_n, their
//! spatial twins, and the border slope in closed form.
//!
//! With the weight factorized as λ^{a0} r^{b} (r = |ξ|, b = d-1+Σa_i after the
//! angular integral) and Re Fp(λ, r) = (r²/2)/(r⁴/4 + λ²), every constant is
//! a two-dimensional integral over (λ, r). The inner r-integral is written
//! as r = √λ t, which isolates the λ^{(b-1)/2} behaviour near λ = 0. The
//! outer integral runs over dyadic shells; on each shell the expensive inner
//! integral is interpolated by a Chebyshev polynomial and only the time
//! factor |Fρ_t(λ)|², possibly oscillatory, is evaluated exactly.

use std::f64::consts::{LN_2, PI};

use serde::Serialize;

use super::engine::{
    adaptive, adaptive_panels, integrate_from, integrate_halfline, integrate_power, linear_fit,
    QuadratureResult, Tolerance,
};
use crate::error::{Error, Result};
use crate::kernels::LocalizedHeatKernel;
use crate::special::sphere_power_integral;
use crate::spectral_model::{normalization_constants, HurstConfig, Mode, Mollifier, Regime};

const INNER_TOL: Tolerance = Tolerance {
    abs: 1e-300,
    rel: 1e-12,
    max_cells: 4000,
};
const CHEB_NODES: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square residual of the fit.
    pub residual: f64,
}

/// Least squares line through (xs, ys).
pub fn slope_fit(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return Err(Error::Degenerate(format!(
            "slope fit: {} abscissae vs {} values",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("slope fit input".into()));
    }
    let (slope, intercept, residual) = linear_fit(xs, ys)
        .ok_or_else(|| Error::Degenerate("slope fit needs two distinct abscissae".into()))?;
    Ok(SlopeFit {
        slope,
        intercept,
        residual,
    })
}

/// Angular factors after the polar integral over ξ.
#[derive(Debug, Clone, Copy)]
struct Exponents {
    a0: f64,
    b: f64,
    sphere: f64,
}

fn exponents(hurst: &HurstConfig) -> Exponents {
    let a = hurst.spatial_exponents();
    let a0 = hurst.h0().map(|h0| 1.0 - 2.0 * h0).unwrap_or(0.0);
    Exponents {
        a0,
        b: hurst.d() as f64 - 1.0 + a.iter().sum::<f64>(),
        sphere: sphere_power_integral(&a),
    }
}

fn q(t: f64) -> f64 {
    let t2 = t * t;
    0.5 * t2 / (0.25 * t2 * t2 + 1.0)
}

/// ∫_{|ξ| ≥ √(c-λ)} |ξ|^{b} |F^sρ(ξ)|² Re Fp(λ, ξ) d|ξ| for λ > 0.
fn inner(m: &Mollifier, b: f64, lambda: f64, c: f64) -> QuadratureResult {
    if lambda < c {
        let r_lo = (c - lambda).sqrt();
        let l2 = lambda * lambda;
        return integrate_from(
            |r: f64| {
                let r2 = r * r;
                m.space_factor(r).powi(2) * 0.5 * r2 / (0.25 * r2 * r2 + l2)
            },
            b,
            r_lo,
            INNER_TOL,
        );
    }
    let sl = lambda.sqrt();
    let t_lo = if c > 0.0 {
        ((c - lambda).max(0.0) / lambda).sqrt()
    } else {
        0.0
    };
    let f = |t: f64| m.space_factor(sl * t).powi(2) * q(t);
    let r = integrate_from(f, b, t_lo, INNER_TOL);
    r.scale(lambda.powf(0.5 * (b - 1.0)))
}

/// Barycentric Chebyshev-Lobatto interpolant on [lo, hi].
struct Cheb {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Cheb {
    fn build<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Self {
        let n = CHEB_NODES;
        let x: Vec<f64> = (0..n)
            .map(|j| {
                let u = (PI * j as f64 / (n - 1) as f64).cos();
                0.5 * (lo + hi) + 0.5 * (hi - lo) * u
            })
            .collect();
        let y = x.iter().map(|&v| f(v)).collect();
        Cheb { x, y }
    }

    fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..n {
            let dx = t - self.x[j];
            if dx == 0.0 {
                return self.y[j];
            }
            let mut w = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == n - 1 {
                w *= 0.5;
            }
            let w = w / dx;
            num += w * self.y[j];
            den += w;
        }
        num / den
    }

    fn max_abs(&self) -> f64 {
        self.y.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// ∫_lo^hi osc(λ) smooth(λ) dλ with `smooth` interpolated; splits the shell
/// when two probe points disagree with the interpolant.
fn shell<O: Fn(f64) -> f64, S: Fn(f64) -> f64>(
    osc: &O,
    smooth: &S,
    lo: f64,
    hi: f64,
    tol: Tolerance,
    depth: u32,
) -> QuadratureResult {
    let cheb = Cheb::build(smooth, lo, hi);
    let probes = [lo + 0.37 * (hi - lo), lo + 0.81 * (hi - lo)];
    let scale = cheb.max_abs();
    let mismatch = probes
        .iter()
        .map(|&p| (smooth(p) - cheb.eval(p)).abs())
        .fold(0.0, f64::max);
    if mismatch > 1e-11 * scale && depth < 8 {
        let mid = 0.5 * (lo + hi);
        return shell(osc, smooth, lo, mid, tol, depth + 1).combine(shell(
            osc,
            smooth,
            mid,
            hi,
            tol,
            depth + 1,
        ));
    }
    let panels = ((hi - lo) / PI).ceil() as usize;
    let mut r = adaptive_panels(
        |l: f64| osc(l) * cheb.eval(l),
        lo,
        hi,
        panels,
        tol.with_max_cells(tol.max_cells.max(4 * panels)),
    );
    r.error_estimate += mismatch
        * (hi - lo)
        * osc(lo)
            .abs()
            .max(osc(hi).abs())
            .max(osc(0.5 * (lo + hi)).abs());
    r
}

/// ∫_0^∞ λ^{a0} |Fρ_t(λ)|² I_c(λ) dλ, the one-sided (λ > 0, radial) core
/// shared by J and c_n. `c = 0` means no cutoff.
fn outer(m: &Mollifier, ex: Exponents, c: f64, tol: Tolerance) -> QuadratureResult {
    let Exponents { a0, b, .. } = ex;
    let osc = |l: f64| m.time_factor(l).norm_sqr();
    let half = 0.5 * (b - 1.0);
    let mut total;
    let mut lo;
    if c == 0.0 {
        // λ^{a0} I(λ) = λ^{a0 + min(0, half)} [λ^{max(0, half)} K(λ)]
        let e_out = a0 + half.min(0.0);
        let f = |l: f64| {
            if l == 0.0 {
                return 0.0;
            }
            let k = inner(m, b, l, 0.0).value * l.powf(-half.min(0.0));
            osc(l) * k
        };
        total = integrate_power(f, e_out, 0.0, 1.0, tol);
        lo = 1.0;
    } else {
        let f = |l: f64| osc(l) * inner(m, b, l, c).value;
        total = integrate_power(f, a0, 0.0, c.min(1.0), tol);
        if c < 1.0 {
            let g = |v: f64| {
                let l = v.exp();
                osc(l) * inner(m, b, l, c).value * l.powf(a0 + 1.0)
            };
            total = total.combine(adaptive(g, c.ln(), 0.0, tol));
            lo = 1.0;
        } else {
            lo = c;
        }
    }
    let smooth = |l: f64| inner(m, b, l, c).value * l.powf(a0);
    let mut small = 0;
    for _ in 0..80 {
        let hi = 2.0 * lo;
        let s = shell(&osc, &smooth, lo, hi, tol, 0);
        let mag = s.value.abs();
        total = total.combine(s);
        let target = tol.abs.max(tol.rel * total.value.abs());
        if mag <= 0.05 * target {
            small += 1;
            if small >= 2 {
                total.error_estimate += mag;
                break;
            }
        } else {
            small = 0;
        }
        lo = hi;
    }
    total.converged = total.error_estimate <= 10.0 * tol.abs.max(tol.rel * total.value.abs());
    total
}

fn space_time(hurst: &HurstConfig) -> Result<()> {
    if hurst.mode() != Mode::SpaceTime {
        return Err(Error::RegimeMismatch(format!(
            "{hurst} is a spatial configuration"
        )));
    }
    Ok(())
}

/// J = ∫ |Fρ|² N Re Fp over R^{1+d}, finite in the sub-critical rough window.
pub fn j_constant(m: &Mollifier, hurst: &HurstConfig) -> Result<QuadratureResult> {
    j_constant_with(m, hurst, Tolerance::default())
}

pub fn j_constant_with(
    m: &Mollifier,
    hurst: &HurstConfig,
    tol: Tolerance,
) -> Result<QuadratureResult> {
    space_time(hurst)?;
    check_dim(m, hurst)?;
    match hurst.regime() {
        Regime::Rough { border: false } => {}
        Regime::Rough { border: true } => {
            return Err(Error::RegimeMismatch(format!(
                "{hurst} is on the border; J diverges logarithmically"
            )))
        }
        Regime::Young => {
            return Err(Error::RegimeMismatch(format!(
                "{hurst} is in the Young regime; J diverges at the origin"
            )))
        }
        Regime::Unsupported => {
            return Err(Error::RegimeMismatch(format!(
                "{hurst} lies below the rough window"
            )))
        }
    }
    let ex = exponents(hurst);
    Ok(outer(m, ex, 0.0, tol).scale(2.0 * ex.sphere))
}

/// J restricted to |λ| <= lambda_max. Defined in every regime, including
/// the Young one where the full integral diverges; used to probe cutoff
/// stability.
pub fn j_truncated(
    m: &Mollifier,
    hurst: &HurstConfig,
    lambda_min: f64,
    lambda_max: f64,
) -> Result<QuadratureResult> {
    space_time(hurst)?;
    check_dim(m, hurst)?;
    if !(lambda_min > 0.0 && lambda_max > lambda_min) {
        return Err(Error::Degenerate(format!(
            "bad λ window [{lambda_min}, {lambda_max}]"
        )));
    }
    let ex = exponents(hurst);
    let tol = Tolerance::new(1e-300, 1e-10);
    let f = |v: f64| {
        let l = v.exp();
        m.time_factor(l).norm_sqr() * inner(m, ex.b, l, 0.0).value * l.powf(ex.a0 + 1.0)
    };
    let panels = ((lambda_max / PI).ceil() as usize).clamp(1, 100_000);
    let r = adaptive_panels(
        f,
        lambda_min.ln(),
        lambda_max.ln(),
        panels.min(64),
        tol.with_max_cells(20 * panels + 4000),
    );
    Ok(r.scale(2.0 * ex.sphere))
}

fn check_dim(m: &Mollifier, hurst: &HurstConfig) -> Result<()> {
    if m.d() != hurst.d() {
        return Err(Error::Degenerate(format!(
            "mollifier dimension {} vs d = {}",
            m.d(),
            hurst.d()
        )));
    }
    Ok(())
}

/// c_n at level n. Sub-critical: c² 2^{2n(d+1-(2H0+H))} J. Border: the
/// integral of |Fρ|² N Re Fp over |λ| + |ξ|² >= 4^{-n}.
pub fn c_n(m: &Mollifier, hurst: &HurstConfig, n: u32) -> Result<f64> {
    Ok(c_n_detail(m, hurst, n, Tolerance::default())?
        .require()?
        .value)
}

pub fn c_n_detail(
    m: &Mollifier,
    hurst: &HurstConfig,
    n: u32,
    tol: Tolerance,
) -> Result<QuadratureResult> {
    space_time(hurst)?;
    check_dim(m, hurst)?;
    let c2 = normalization_constants(hurst)?.c_squared();
    match hurst.regime() {
        Regime::Rough { border: false } => {
            let j = j_constant_with(m, hurst, tol)?;
            Ok(j.scale(c2 * 2f64.powf(2.0 * n as f64 * hurst.criticality_gap())))
        }
        Regime::Rough { border: true } => {
            let ex = exponents(hurst);
            let c = 4f64.powi(-(n as i32));
            Ok(outer(m, ex, c, tol).scale(2.0 * ex.sphere * c2))
        }
        _ => Err(Error::RegimeMismatch(format!(
            "c_n is only defined in the rough window, got {hurst}"
        ))),
    }
}

/// ∫_0^{π/2} sin^p θ cos^q θ / (cos⁴θ/4 + sin⁴θ) dθ with both endpoint
/// singularities absorbed by power substitutions.
pub fn angular_integral(p: f64, q: f64) -> Result<f64> {
    if p <= -1.0 || q <= -1.0 {
        return Err(Error::SingularArgument(format!(
            "angular exponents ({p}, {q}) are not integrable"
        )));
    }
    let den = |t: f64| {
        let (s, c) = t.sin_cos();
        0.25 * c.powi(4) + s.powi(4)
    };
    let ratio = |x: f64| {
        if x < 1e-8 {
            1.0 - x * x / 6.0
        } else {
            x.sin() / x
        }
    };
    let tol = Tolerance::new(1e-300, 1e-13);
    let left = integrate_power(
        |t: f64| ratio(t).powf(p) * t.cos().powf(q) / den(t),
        p,
        0.0,
        PI / 4.0,
        tol,
    );
    let right = integrate_power(
        |u: f64| {
            let t = PI / 2.0 - u;
            ratio(u).powf(q) * t.sin().powf(p) / den(t)
        },
        q,
        0.0,
        PI / 4.0,
        tol,
    );
    Ok(left.combine(right).require()?.value)
}

/// Limiting increment c_{n+1} - c_n on the border; does not depend on the
/// mollifier.
pub fn border_slope_closed_form(hurst: &HurstConfig) -> Result<f64> {
    space_time(hurst)?;
    if !hurst.is_border() {
        return Err(Error::RegimeMismatch(format!(
            "{hurst} is not on the border"
        )));
    }
    let h0 = hurst.h0().expect("space-time mode");
    let d = hurst.d() as f64;
    let theta = angular_integral(3.0 - 4.0 * h0, 2.0 * d + 1.0 - 2.0 * hurst.sum_h())?;
    let ex = exponents(hurst);
    let c2 = normalization_constants(hurst)?.c_squared();
    Ok(2.0 * c2 * ex.sphere * theta * LN_2)
}

fn spatial(hurst: &HurstConfig) -> Result<()> {
    if hurst.mode() != Mode::Spatial {
        return Err(Error::RegimeMismatch(format!(
            "{hurst} is a space-time configuration"
        )));
    }
    Ok(())
}

/// Spatial J = ∫ |F^sρ|² N (2/|ξ|²) dξ.
pub fn j_spatial(m: &Mollifier, hurst: &HurstConfig) -> Result<QuadratureResult> {
    spatial(hurst)?;
    check_dim(m, hurst)?;
    if hurst.regime() != (Regime::Rough { border: false }) {
        return Err(Error::RegimeMismatch(format!(
            "spatial J needs the sub-critical window, got {hurst}"
        )));
    }
    let ex = exponents(hurst);
    let r = integrate_halfline(
        |r: f64| 2.0 * m.space_factor(r).powi(2),
        ex.b - 2.0,
        Tolerance::default(),
    );
    Ok(r.scale(ex.sphere))
}

pub fn c_n_spatial(m: &Mollifier, hurst: &HurstConfig, n: u32) -> Result<f64> {
    spatial(hurst)?;
    check_dim(m, hurst)?;
    let c2 = normalization_constants(hurst)?.c_squared();
    match hurst.regime() {
        Regime::Rough { border: false } => {
            let j = j_spatial(m, hurst)?.require()?.value;
            Ok(c2 * 2f64.powf(2.0 * n as f64 * hurst.criticality_gap()) * j)
        }
        Regime::Rough { border: true } => {
            let ex = exponents(hurst);
            let lo = 2f64.powi(-(n as i32));
            let r = integrate_from(
                |r: f64| 2.0 * m.space_factor(r).powi(2),
                -1.0,
                lo,
                Tolerance::default(),
            );
            Ok(c2 * ex.sphere * r.require()?.value)
        }
        _ => Err(Error::RegimeMismatch(format!(
            "spatial c_n is only defined in the rough window, got {hurst}"
        ))),
    }
}

/// Spatial c_n built with a localized kernel: c_H² ∫ |F^sρ_n|² N FK̃ dξ.
/// FK̃ is bounded at the origin, so no cutoff is needed in any regime.
pub fn c_n_spatial_kernel(
    m: &Mollifier,
    hurst: &HurstConfig,
    kernel: &LocalizedHeatKernel,
    n: u32,
) -> Result<f64> {
    spatial(hurst)?;
    check_dim(m, hurst)?;
    if kernel.d() != hurst.d() {
        return Err(Error::Degenerate(format!(
            "kernel dimension {} vs d = {}",
            kernel.d(),
            hurst.d()
        )));
    }
    if !matches!(hurst.regime(), Regime::Rough { .. }) {
        return Err(Error::RegimeMismatch(format!(
            "spatial c_n is only defined in the rough window, got {hurst}"
        )));
    }
    let c2 = normalization_constants(hurst)?.c_squared();
    let ex = exponents(hurst);
    let a = 2f64.powi(-(n as i32));
    let heat = |r: f64| {
        let g = if r < 1e-6 {
            1.0 - r * r / 4.0
        } else {
            2.0 * (1.0 - (-0.5 * r * r).exp()) / (r * r)
        };
        m.space_factor(a * r).powi(2) * g
    };
    let main = integrate_halfline(heat, ex.b, Tolerance::default())
        .require()?
        .value;
    let (rem, _) =
        kernel.tilde_remainder_integral(|r| r.powf(ex.b) * m.space_factor(a * r).powi(2))?;
    Ok(c2 * ex.sphere * (main - rem))
}

pub fn border_slope_closed_form_spatial(hurst: &HurstConfig) -> Result<f64> {
    spatial(hurst)?;
    if !hurst.is_border() {
        return Err(Error::RegimeMismatch(format!(
            "{hurst} is not on the border"
        )));
    }
    let c2 = normalization_constants(hurst)?.c_squared();
    Ok(2.0 * c2 * exponents(hurst).sphere * LN_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        let f = slope_fit(&xs, &ys).unwrap();
        assert!((f.slope - 2.5).abs() < 1e-14 && (f.intercept + 1.0).abs() < 1e-14);
        assert!(slope_fit(&[1.0], &[2.0]).is_err());
        assert!(slope_fit(&[1.0, 1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn angular_integral_symmetric_case() {
        // p = q = 0: ∫ dθ / (cos⁴/4 + sin⁴); tan substitution gives
        // ∫_0^∞ (1+u²) / (1/4 + u⁴) du = π (1 + 1/2·... ) checked numerically
        let v = angular_integral(0.0, 0.0).unwrap();
        let w = adaptive(
            |u: f64| (1.0 + u * u) / (0.25 + u.powi(4)),
            0.0,
            200.0,
            Tolerance::new(1e-14, 1e-13).with_max_cells(20000),
        )
        .value
            + (1.0 / 200.0 + 1.0 / (3.0 * 200f64.powi(3)));
        assert!((v - w).abs() < 1e-7, "{v} {w}");
    }

    #[test]
    fn spatial_border_closed_form_is_ln2_over_pi() {
        let h = HurstConfig::spatial(&[0.5, 0.5]).unwrap();
        let v = border_slope_closed_form_spatial(&h).unwrap();
        assert!((v - LN_2 / PI).abs() < 1e-9);
    }

    #[test]
    fn spatial_border_sequence_increments() {
        let h = HurstConfig::spatial(&[0.5, 0.5]).unwrap();
        let m = Mollifier::gauss_gauss(2);
        let a = c_n_spatial(&m, &h, 6).unwrap();
        let b = c_n_spatial(&m, &h, 7).unwrap();
        // c_H² A ∫ 2e^{-r²}/r dr over [2^-7, 2^-6] = (1/2π) ∫ e^{-u}/u du
        let (u0, u1) = (4f64.powi(-7), 4f64.powi(-6));
        let mut series = (u1 / u0).ln();
        let mut fact = 1.0;
        for k in 1..12 {
            fact *= k as f64;
            let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
            series += sign * (u1.powi(k) - u0.powi(k)) / (k as f64 * fact);
        }
        assert!(
            ((b - a) - series / (2.0 * PI)).abs() < 1e-10,
            "{} {}",
            b - a,
            series / (2.0 * PI)
        );
    }

    #[test]
    fn rejects_wrong_regime() {
        let m = Mollifier::gauss_gauss(1);
        let young = HurstConfig::space_time(0.75, &[0.55]).unwrap();
        assert!(matches!(
            j_constant(&m, &young),
            Err(Error::RegimeMismatch(_))
        ));
        let border = HurstConfig::space_time(0.8, &[0.4]).unwrap();
        assert!(j_constant(&m, &border).is_err());
        assert!(border_slope_closed_form(&young).is_err());
    }
}
