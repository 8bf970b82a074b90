//! Hurst configurations, the spectral weight, normalization constants and
//! the mollifier catalog.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{adaptive, adaptive_panels, integrate_power, QuadratureResult, Tolerance};

const BORDER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SpaceTime,
    Spatial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    Young,
    Rough { border: bool },
    Unsupported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstConfig {
    d: usize,
    h0: Option<f64>,
    h: Vec<f64>,
}

fn check_index(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) || !v.is_finite() {
        return Err(Error::InvalidHurst(format!(
            "{name} = {v} must lie strictly inside (0, 1)"
        )));
    }
    Ok(())
}

impl HurstConfig {
    pub fn space_time(h0: f64, h: &[f64]) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::InvalidHurst(
                "need at least one spatial index".into(),
            ));
        }
        check_index("H0", h0)?;
        for (i, &hi) in h.iter().enumerate() {
            check_index(&format!("H{}", i + 1), hi)?;
        }
        Ok(HurstConfig {
            d: h.len(),
            h0: Some(h0),
            h: h.to_vec(),
        })
    }

    pub fn spatial(h: &[f64]) -> Result<Self> {
        if h.len() < 2 {
            return Err(Error::InvalidHurst("spatial mode needs d >= 2".into()));
        }
        for (i, &hi) in h.iter().enumerate() {
            check_index(&format!("H{}", i + 1), hi)?;
        }
        Ok(HurstConfig {
            d: h.len(),
            h0: None,
            h: h.to_vec(),
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn h0(&self) -> Option<f64> {
        self.h0
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn mode(&self) -> Mode {
        if self.h0.is_some() {
            Mode::SpaceTime
        } else {
            Mode::Spatial
        }
    }

    /// H = Σ H_i.
    pub fn sum_h(&self) -> f64 {
        self.h.iter().sum()
    }

    /// 2H0 + H in space-time mode, H in spatial mode.
    pub fn scaling_index(&self) -> f64 {
        match self.h0 {
            Some(h0) => 2.0 * h0 + self.sum_h(),
            None => self.sum_h(),
        }
    }

    /// Upper threshold of the rough window: d+1 in space-time mode, d-1 in
    /// spatial mode.
    pub fn critical_index(&self) -> f64 {
        match self.h0 {
            Some(_) => self.d as f64 + 1.0,
            None => self.d as f64 - 1.0,
        }
    }

    /// Distance to the border; positive means sub-critical.
    pub fn criticality_gap(&self) -> f64 {
        self.critical_index() - self.scaling_index()
    }

    pub fn is_border(&self) -> bool {
        self.criticality_gap().abs() <= BORDER_TOL
    }

    pub fn regime(&self) -> Regime {
        let gap = self.criticality_gap();
        if gap.abs() <= BORDER_TOL {
            Regime::Rough { border: true }
        } else if gap < 0.0 {
            Regime::Young
        } else if self.scaling_index() > self.critical_index() - 0.5 {
            Regime::Rough { border: false }
        } else {
            Regime::Unsupported
        }
    }

    /// Weight exponents a_i = 1 - 2H_i, time first in space-time mode.
    pub fn weight_exponents(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.d + 1);
        if let Some(h0) = self.h0 {
            v.push(1.0 - 2.0 * h0);
        }
        v.extend(self.h.iter().map(|h| 1.0 - 2.0 * h));
        v
    }

    pub fn spatial_exponents(&self) -> Vec<f64> {
        self.h.iter().map(|h| 1.0 - 2.0 * h).collect()
    }

    /// Same indices viewed in spatial mode.
    pub fn spatial_part(&self) -> Result<Self> {
        HurstConfig::spatial(&self.h)
    }

    pub fn label(&self) -> String {
        let hs: Vec<String> = self.h.iter().map(|h| format!("{h}")).collect();
        match self.h0 {
            Some(h0) => format!("H0={h0};H=({})", hs.join(",")),
            None => format!("H=({})", hs.join(",")),
        }
    }
}

impl fmt::Display for HurstConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// N_{H0,H}(λ, ξ) = |λ|^{1-2H0} Π |ξ_i|^{1-2H_i}.
#[derive(Debug, Clone)]
pub struct SpectralWeight {
    hurst: HurstConfig,
}

impl SpectralWeight {
    pub fn new(hurst: HurstConfig) -> Self {
        SpectralWeight { hurst }
    }

    pub fn hurst(&self) -> &HurstConfig {
        &self.hurst
    }

    pub fn mode(&self) -> Mode {
        self.hurst.mode()
    }

    /// One-dimensional factor |u|^{1-2H}.
    pub fn factor(h: f64, u: f64) -> Result<f64> {
        let a = 1.0 - 2.0 * h;
        if u == 0.0 {
            if a < 0.0 {
                return Err(Error::SingularArgument(format!("weight |u|^{a} at u = 0")));
            }
            return Ok(if a == 0.0 { 1.0 } else { 0.0 });
        }
        Ok(u.abs().powf(a))
    }

    pub fn time_factor(&self, lambda: f64) -> Result<f64> {
        match self.hurst.h0 {
            Some(h0) => SpectralWeight::factor(h0, lambda),
            None => Ok(1.0),
        }
    }

    pub fn space_factor(&self, xi: &[f64]) -> Result<f64> {
        if xi.len() != self.hurst.d {
            return Err(Error::MalformedGrid(format!(
                "expected {} spatial frequencies, got {}",
                self.hurst.d,
                xi.len()
            )));
        }
        let mut v = 1.0;
        for (&h, &x) in self.hurst.h.iter().zip(xi) {
            v *= SpectralWeight::factor(h, x)?;
        }
        Ok(v)
    }

    /// Evaluates the weight; `lambda` is ignored in spatial mode.
    pub fn eval(&self, lambda: f64, xi: &[f64]) -> Result<f64> {
        Ok(self.time_factor(lambda)? * self.space_factor(xi)?)
    }
}

/// ∫_R |e^{iξ}-1|²/|ξ|^{2H+1} dξ. Power map on [0,1], period panels on
/// [1, X], the non-oscillating part integrated exactly and an asymptotic
/// series for the oscillating tail.
pub fn normalization_integral(h: f64) -> Result<QuadratureResult> {
    check_index("H", h)?;
    let tol = Tolerance::new(1e-15, 1e-13);
    // (2 - 2cos ξ) ξ^{-2H-1} = s(ξ) ξ^{1-2H} with s smooth.
    let s = |x: f64| {
        if x < 1e-4 {
            1.0 - x * x / 12.0
        } else {
            let q = (0.5 * x).sin() / (0.5 * x);
            q * q
        }
    };
    let head = integrate_power(s, 1.0 - 2.0 * h, 0.0, 1.0, tol);
    let a = 2.0 * h + 1.0;
    let periods = 32usize;
    let x_end = 1.0 + 2.0 * PI * periods as f64;
    let mid = adaptive_panels(
        |x: f64| -2.0 * x.cos() * x.powf(-a),
        1.0,
        x_end,
        periods,
        tol,
    );
    let flat = 1.0 / h; // ∫_1^∞ 2 ξ^{-2H-1}
    let tail = -2.0 * cos_tail(a, x_end);
    let half = head
        .combine(mid)
        .combine(QuadratureResult::exact(flat + tail));
    let r = half.scale(2.0);
    if r.error_estimate > 1e-8 * r.value.abs() {
        return Err(Error::NonConvergence {
            value: r.value,
            error: r.error_estimate,
            cells: r.cells_used,
        });
    }
    Ok(QuadratureResult {
        converged: true,
        ..r
    })
}

/// ∫_X^∞ cos(ξ) ξ^{-a} dξ by the asymptotic expansion of the incomplete
/// Fourier integral (accurate for X ≳ 50).
fn cos_tail(a: f64, x: f64) -> f64 {
    // ∫_X^∞ e^{iξ} ξ^{-a} = i e^{iX} X^{-a} Σ_k (a)_k (-i/X)^k
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    for k in 0..40 {
        let next = term * Complex64::new(0.0, -(a + k as f64) / x);
        if next.norm() > term.norm() {
            break;
        }
        term = next;
        sum += term;
        if term.norm() < 1e-18 {
            break;
        }
    }
    let lead = Complex64::new(0.0, 1.0) * Complex64::new(0.0, x).exp() * x.powf(-a);
    (lead * sum).re
}

/// Second scheme for the same integral: a high-order polynomial map on
/// [0, 1] and a rotated contour for the tail, so the oscillating part never
/// meets a real-axis quadrature.
pub fn normalization_integral_alt(h: f64) -> Result<QuadratureResult> {
    check_index("H", h)?;
    let tol = Tolerance::new(1e-15, 1e-13);
    let m = (2.0 / (2.0 - 2.0 * h)).ceil().max(2.0);
    let head = adaptive(
        |t: f64| {
            if t == 0.0 {
                return 0.0;
            }
            let x = t.powf(m);
            (2.0 - 2.0 * x.cos()) * x.powf(-2.0 * h - 1.0) * m * t.powf(m - 1.0)
        },
        0.0,
        1.0,
        tol,
    );
    let a = 2.0 * h + 1.0;
    // ∫_1^∞ e^{iξ} ξ^{-a} dξ = i e^{i} ∫_0^∞ e^{-t} (1+it)^{-a} dt
    let rot = crate::quadrature::integrate_halfline(
        |t: f64| (-t).exp() * Complex64::new(1.0, t).powf(-a),
        0.0,
        tol,
    );
    let osc = (Complex64::new(0.0, 1.0) * Complex64::new(0.0, 1.0).exp() * rot.value).re;
    let flat = 1.0 / h;
    let half_val = head.value + flat - 2.0 * osc;
    let err = head.error_estimate + 2.0 * rot.error_estimate;
    Ok(QuadratureResult {
        value: 2.0 * half_val,
        error_estimate: 2.0 * err,
        converged: head.converged && rot.converged,
        cells_used: head.cells_used + rot.cells_used,
    })
}

fn cached_integral(h: f64) -> Result<f64> {
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().expect("cache poisoned").get(&h.to_bits()) {
        return Ok(*v);
    }
    let v = normalization_integral(h)?.value;
    cache.lock().expect("cache poisoned").insert(h.to_bits(), v);
    Ok(v)
}

/// c_H = I(H)^{-1/2} for a single index.
pub fn normalization_constant_1d(h: f64) -> Result<f64> {
    Ok(cached_integral(h)?.powf(-0.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Normalization {
    pub c_h0: Option<f64>,
    pub c_h: f64,
}

impl Normalization {
    /// c_{H0,H}² in space-time mode, c_H² in spatial mode.
    pub fn c_squared(&self) -> f64 {
        (self.c_h0.unwrap_or(1.0) * self.c_h).powi(2)
    }
}

pub fn normalization_constants(hurst: &HurstConfig) -> Result<Normalization> {
    let c_h0 = match hurst.h0() {
        Some(h0) => Some(normalization_constant_1d(h0)?),
        None => None,
    };
    let mut c_h = 1.0;
    for &h in hurst.h() {
        c_h *= normalization_constant_1d(h)?;
    }
    Ok(Normalization { c_h0, c_h })
}

type TimeFactor = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;
type SpaceFactor = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MollifierKind {
    GaussGauss,
    IndicatorHeat,
    Custom(String),
}

/// A unit-mass mollifier whose Fourier transform factorizes into a time
/// factor and a radial spatial factor.
#[derive(Clone)]
pub struct Mollifier {
    kind: MollifierKind,
    d: usize,
    time: TimeFactor,
    space: SpaceFactor,
}

impl fmt::Debug for Mollifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mollifier")
            .field("kind", &self.kind)
            .field("d", &self.d)
            .finish()
    }
}

fn gauss_time(l: f64) -> Complex64 {
    Complex64::new((-0.5 * l * l).exp(), 0.0)
}

/// ∫_0^1 e^{-iλs} ds.
fn indicator_time(l: f64) -> Complex64 {
    if l.abs() < 1e-6 {
        Complex64::new(1.0 - l * l / 6.0, -0.5 * l)
    } else {
        (Complex64::new(1.0, 0.0) - Complex64::new(0.0, -l).exp()) / Complex64::new(0.0, l)
    }
}

impl Mollifier {
    /// ρ(s,x) = p_1(s) p_1(x).
    pub fn gauss_gauss(d: usize) -> Self {
        Mollifier {
            kind: MollifierKind::GaussGauss,
            d,
            time: Arc::new(gauss_time),
            space: Arc::new(|r: f64| (-0.5 * r * r).exp()),
        }
    }

    /// ρ(s,x) = 1_{[0,1]}(s) p_1(x).
    pub fn indicator_heat(d: usize) -> Self {
        Mollifier {
            kind: MollifierKind::IndicatorHeat,
            d,
            time: Arc::new(indicator_time),
            space: Arc::new(|r: f64| (-0.5 * r * r).exp()),
        }
    }

    /// User-supplied factors: `time(λ)` and the radial profile `space(|ξ|)`.
    /// Both must equal one at the origin.
    pub fn custom<T, S>(name: &str, d: usize, time: T, space: S) -> Result<Self>
    where
        T: Fn(f64) -> Complex64 + Send + Sync + 'static,
        S: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let t0 = time(0.0);
        let s0 = space(0.0);
        if (t0 - Complex64::new(1.0, 0.0)).norm() > 1e-12 || (s0 - 1.0).abs() > 1e-12 {
            return Err(Error::Degenerate(format!(
                "mollifier '{name}' is not normalized: F(0) = {t0} * {s0}"
            )));
        }
        Ok(Mollifier {
            kind: MollifierKind::Custom(name.into()),
            d,
            time: Arc::new(time),
            space: Arc::new(space),
        })
    }

    pub fn from_kind(kind: &MollifierKind, d: usize) -> Result<Self> {
        match kind {
            MollifierKind::GaussGauss => Ok(Mollifier::gauss_gauss(d)),
            MollifierKind::IndicatorHeat => Ok(Mollifier::indicator_heat(d)),
            MollifierKind::Custom(n) => Err(Error::Unsupported(format!(
                "custom mollifier '{n}' must be built in code with Mollifier::custom"
            ))),
        }
    }

    pub fn kind(&self) -> &MollifierKind {
        &self.kind
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn name(&self) -> String {
        match &self.kind {
            MollifierKind::GaussGauss => "gauss-gauss".into(),
            MollifierKind::IndicatorHeat => "indicator-heat".into(),
            MollifierKind::Custom(n) => n.clone(),
        }
    }

    pub fn time_factor(&self, lambda: f64) -> Complex64 {
        (self.time)(lambda)
    }

    pub fn space_factor(&self, r: f64) -> f64 {
        (self.space)(r.abs())
    }

    /// Fρ(λ, ξ).
    pub fn fourier(&self, lambda: f64, xi: &[f64]) -> Complex64 {
        let r = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.time_factor(lambda) * self.space_factor(r)
    }

    /// F^sρ(ξ) for the spatial mollifier.
    pub fn fourier_spatial(&self, xi: &[f64]) -> f64 {
        let r = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.space_factor(r)
    }

    /// |Fρ|² with ξ given by its norm.
    pub fn power_radial(&self, lambda: f64, r: f64) -> f64 {
        self.time_factor(lambda).norm_sqr() * self.space_factor(r).powi(2)
    }

    /// Fρ_n(λ, ξ) = Fρ(2^{-2n} λ, 2^{-n} ξ).
    pub fn fourier_level(&self, n: u32, lambda: f64, xi: &[f64]) -> Complex64 {
        let a = 2f64.powi(-(n as i32));
        let r = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.time_factor(a * a * lambda) * self.space_factor(a * r)
    }
}

/// Sample grid for the decay certificate: one list of sample values per
/// axis (time first). Points are the tensor product.
#[derive(Debug, Clone)]
pub struct SampleGrid {
    pub axes: Vec<Vec<f64>>,
}

impl SampleGrid {
    /// Zero plus a geometric ladder up to `max` on every axis.
    pub fn geometric(axes: usize, min: f64, max: f64, per_axis: usize) -> Self {
        let mut v = vec![0.0];
        let r = (max / min).powf(1.0 / (per_axis.max(2) - 1) as f64);
        let mut x = min;
        for _ in 0..per_axis {
            v.push(x);
            x *= r;
        }
        SampleGrid {
            axes: vec![v; axes],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TauRow {
    pub tau: Vec<f64>,
    pub c_tau: f64,
    /// Sup over the inner half of the grid; a large jump to `c_tau` means the
    /// bound is still growing at the grid edge.
    pub c_tau_inner: f64,
    pub bounded: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RhoCertificate {
    pub mollifier: String,
    pub origin_value: f64,
    pub sup_modulus: f64,
    pub lipschitz: f64,
    pub even: bool,
    pub rows: Vec<TauRow>,
}

impl RhoCertificate {
    pub fn passes(&self) -> bool {
        (self.origin_value - 1.0).abs() < 1e-12
            && self.sup_modulus <= 1.0 + 1e-12
            && self.even
            && self.rows.iter().all(|r| r.bounded)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,c_tau,status\n");
        for r in &self.rows {
            let t: Vec<String> = r.tau.iter().map(|v| format!("{v}")).collect();
            let status = if r.bounded { "ok" } else { "diverging" };
            out.push_str(&format!("{},{:.6e},{}\n", t.join(";"), r.c_tau, status));
        }
        out
    }
}

/// Empirical check of the mollifier assumptions on a sample grid.
pub fn verify_assumption_rho(
    m: &Mollifier,
    tau_grid: &[Vec<f64>],
    grid: &SampleGrid,
) -> Result<RhoCertificate> {
    let axes = m.d() + 1;
    if tau_grid.is_empty() || grid.axes.len() != axes || grid.axes.iter().any(|a| a.is_empty()) {
        return Err(Error::MalformedGrid(format!(
            "need {axes} non-empty sample axes and at least one tau"
        )));
    }
    if grid.axes.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::MalformedGrid("non-finite sample".into()));
    }
    if tau_grid.iter().any(|t| t.len() != axes) {
        return Err(Error::MalformedGrid(format!(
            "tau tuples must have {axes} entries"
        )));
    }
    let counts: Vec<usize> = grid.axes.iter().map(|a| a.len()).collect();
    let total: usize = counts.iter().product();
    let limits: Vec<f64> = grid
        .axes
        .iter()
        .map(|a| a.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .collect();
    let mut points = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut p = vec![0.0; axes];
        for (k, c) in counts.iter().enumerate().rev() {
            p[k] = grid.axes[k][rem % c];
            rem /= c;
        }
        points.push(p);
    }
    let values: Vec<Complex64> = points.iter().map(|p| m.fourier(p[0], &p[1..])).collect();
    let origin_value = m.fourier(0.0, &vec![0.0; m.d()]).norm();
    let sup_modulus = values.iter().fold(0.0f64, |a, v| a.max(v.norm()));
    let mut even = true;
    for p in points.iter().take(2000) {
        let mut q = p.clone();
        for v in q.iter_mut() {
            *v = -*v;
        }
        let a = m.fourier(p[0], &p[1..]).norm();
        let b = m.fourier(q[0], &q[1..]).norm();
        if (a - b).abs() > 1e-12 * (1.0 + a) {
            even = false;
        }
    }
    // Lipschitz estimate from forward differences along each axis.
    let mut lipschitz = 0.0f64;
    let h = 1e-5;
    for p in points.iter().step_by((total / 4000).max(1)) {
        let f0 = m.fourier(p[0], &p[1..]);
        for k in 0..axes {
            let mut q = p.clone();
            q[k] += h;
            let f1 = m.fourier(q[0], &q[1..]);
            lipschitz = lipschitz.max((f1 - f0).norm() / h);
        }
    }
    let mut rows = Vec::with_capacity(tau_grid.len());
    for tau in tau_grid {
        let mut c_full = 0.0f64;
        let mut c_inner = 0.0f64;
        for (p, v) in points.iter().zip(&values) {
            let mut w = v.norm();
            let mut inner = true;
            for k in 0..axes {
                if tau[k] != 0.0 {
                    w *= p[k].abs().powf(tau[k]);
                }
                if p[k].abs() > 0.5 * limits[k] {
                    inner = false;
                }
            }
            c_full = c_full.max(w);
            if inner {
                c_inner = c_inner.max(w);
            }
        }
        let bounded = c_full.is_finite() && c_full <= 1.5 * c_inner.max(1e-300) + 1e-12;
        rows.push(TauRow {
            tau: tau.clone(),
            c_tau: c_full,
            c_tau_inner: c_inner,
            bounded,
        });
    }
    Ok(RhoCertificate {
        mollifier: m.name(),
        origin_value,
        sup_modulus,
        lipschitz,
        even,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn regimes() {
        let b = HurstConfig::space_time(0.8, &[0.4]).unwrap();
        assert_eq!(b.regime(), Regime::Rough { border: true });
        let s = HurstConfig::space_time(0.75, &[0.45]).unwrap();
        assert_eq!(s.regime(), Regime::Rough { border: false });
        let y = HurstConfig::space_time(0.75, &[0.55]).unwrap();
        assert_eq!(y.regime(), Regime::Young);
        let u = HurstConfig::space_time(0.5, &[0.4]).unwrap();
        assert_eq!(u.regime(), Regime::Unsupported);
        let w = HurstConfig::spatial(&[0.5, 0.5]).unwrap();
        assert_eq!(w.regime(), Regime::Rough { border: true });
        assert!(HurstConfig::space_time(1.0, &[0.5]).is_err());
        assert!(HurstConfig::space_time(0.5, &[0.0]).is_err());
        assert!(HurstConfig::spatial(&[0.5]).is_err());
    }

    #[test]
    fn weight_examples() {
        let w = SpectralWeight::new(HurstConfig::space_time(0.5, &[0.5, 0.5]).unwrap());
        assert_eq!(w.eval(3.0, &[0.2, -7.0]).unwrap(), 1.0);
        let w = SpectralWeight::new(HurstConfig::space_time(0.75, &[0.5]).unwrap());
        assert_relative_eq!(w.eval(4.0, &[1.0]).unwrap(), 0.5, epsilon = 1e-15);
        let w = SpectralWeight::new(HurstConfig::space_time(0.75, &[0.3]).unwrap());
        assert!(w.eval(0.0, &[1.0]).is_err());
        assert_eq!(w.eval(1.0, &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn half_integral_is_two_pi() {
        let r = normalization_integral(0.5).unwrap();
        assert_relative_eq!(r.value, 2.0 * PI, max_relative = 1e-10);
    }

    #[test]
    fn mollifiers_are_normalized() {
        for m in [Mollifier::gauss_gauss(1), Mollifier::indicator_heat(1)] {
            assert_relative_eq!(m.fourier(0.0, &[0.0]).norm(), 1.0, epsilon = 1e-15);
            for &(l, x) in &[(0.3, 0.1), (5.0, -2.0), (-40.0, 3.0)] {
                let v = m.fourier(l, &[x]);
                assert!(v.norm() <= 1.0);
                assert_relative_eq!(v.norm(), m.fourier(-l, &[-x]).norm(), epsilon = 1e-14);
            }
        }
        assert!(Mollifier::custom("bad", 1, |_| Complex64::new(2.0, 0.0), |_| 1.0).is_err());
    }
}
