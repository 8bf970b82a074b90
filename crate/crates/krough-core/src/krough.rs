//! First and second level pairings of the K-rough path built on a lattice
//! field, their exact moments, dyadic Besov estimates and the Cauchy study
//! across mollification levels.
//!
//! Pairings are trapezoid sums Σ_j h^{d+1} ψ^ℓ_{s,x}(z_j) f(z_j) over the
//! lattice nodes in the support of ψ^ℓ_{s,x}, with ψ^ℓ = S^{2^{-ℓ}} ψ. In
//! spatial mode the noise does not depend on time and ψ^ℓ is integrated
//! over t in closed form first.
//!
//! The second level at base point z0 is W²_{z0}(z) = (V(z) - V(z0)) W(z)
//! with V = K∗W (K̃∗W in spatial mode). Its exact moments on a lattice come
//! from the Wick formula written as a handful of periodic convolutions, so
//! they cost a few FFTs of the lattice size.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::NdFft;
use crate::field_synthesis::{mix_seed, Lattice, LatticeField, PowerRule, SpectralModel};
use crate::kernels::{LocalizedHeatKernel, Part};
use crate::quadrature::{
    c_n, integrate_halfline, integrate_singular, slope_fit, Domain, Tolerance,
};
use crate::spectral_model::{
    normalization_constants, HurstConfig, Mode, Mollifier, SpectralWeight,
};
use crate::testfn::{scale_translate, TestFunction};

/// Nodes required inside the support of ψ^ℓ along every axis.
pub const MIN_SUPPORT_NODES: usize = 4;

/// Offsets (in lattice steps) and weights h^{d+1} ψ^ℓ(z) of a test
/// function centred at a node.
#[derive(Debug, Clone)]
pub struct TestStencil {
    pub offsets: Vec<Vec<i64>>,
    pub weights: Vec<f64>,
    /// Half-widths of the support in nodes, per axis.
    pub reach: Vec<i64>,
}

impl TestStencil {
    /// Lattice quadrature of ⟨1, ψ^ℓ⟩.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weights scattered onto a periodic lattice array centred at node 0.
    pub fn periodic_array(&self, l: &Lattice) -> Vec<f64> {
        let mut a = vec![0.0; l.len()];
        for (off, &w) in self.offsets.iter().zip(&self.weights) {
            let multi: Vec<usize> = off
                .iter()
                .enumerate()
                .map(|(ax, &o)| o.rem_euclid(l.size(ax) as i64) as usize)
                .collect();
            a[l.index(&multi)] += w;
        }
        a
    }
}

/// Builds the trapezoid stencil of ψ^ℓ; fails when an axis of the support
/// holds fewer than [`MIN_SUPPORT_NODES`] interior nodes.
pub fn test_stencil(l: &Lattice, psi: &TestFunction, ell: u32) -> Result<TestStencil> {
    if psi.d() != l.d {
        return Err(Error::Degenerate(format!(
            "test function d = {} vs lattice d = {}",
            psi.d(),
            l.d
        )));
    }
    let delta = 2f64.powi(-(ell as i32));
    let st = scale_translate(psi, delta, 0.0, &vec![0.0; l.d])?;
    let mut reach = Vec::new();
    for ax in 0..l.axes() {
        let half = if l.has_time() && ax == 0 {
            delta * delta
        } else {
            delta
        };
        let h = l.step(ax);
        // interior nodes of (-half, half)
        let r = ((half / h) * (1.0 - 1e-12)).floor() as i64;
        if (2 * r + 1) < MIN_SUPPORT_NODES as i64 {
            return Err(Error::UnderResolved(format!(
                "scale ℓ = {ell} covers {} nodes on axis {ax} (step {h}); need {MIN_SUPPORT_NODES}",
                2 * r + 1
            )));
        }
        if 2 * r + 1 > l.size(ax) as i64 {
            return Err(Error::MalformedGrid(format!(
                "support of ψ^{ell} exceeds the lattice on axis {ax}"
            )));
        }
        reach.push(r);
    }
    let cell = l.cell_volume();
    // spatial mode: ∫ ψ^ℓ dt = δ^{-d} (∫b_0 / b_0(0)) ψ(0, ·/δ)
    let time_mass = psi.factors()[0].fourier(0.0) / psi.factors()[0].eval(0.0);
    let axes = l.axes();
    let spans: Vec<usize> = reach.iter().map(|&r| (2 * r + 1) as usize).collect();
    let total: usize = spans.iter().product();
    let mut offsets = Vec::new();
    let mut weights = Vec::new();
    let mut idx = vec![0usize; axes];
    for _ in 0..total {
        let off: Vec<i64> = idx
            .iter()
            .zip(&reach)
            .map(|(&i, &r)| i as i64 - r)
            .collect();
        let w = if l.has_time() {
            let t = off[0] as f64 * l.dt;
            let y: Vec<f64> = off[1..].iter().map(|&o| o as f64 * l.dx).collect();
            cell * st.eval(t, &y)
        } else {
            let y: Vec<f64> = off.iter().map(|&o| o as f64 * l.dx).collect();
            cell * time_mass * delta * delta * st.eval(0.0, &y)
        };
        if w != 0.0 {
            offsets.push(off);
            weights.push(w);
        }
        for a in (0..axes).rev() {
            idx[a] += 1;
            if idx[a] < spans[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    Ok(TestStencil {
        offsets,
        weights,
        reach,
    })
}

/// A base point given by node indices (time first in space-time mode).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Node(pub Vec<usize>);

/// Node at physical coordinates (s, x); `s` is ignored in spatial mode.
pub fn node_at(l: &Lattice, s: f64, x: &[f64]) -> Result<Node> {
    if x.len() != l.d {
        return Err(Error::Degenerate("base point dimension mismatch".into()));
    }
    let mut coords = Vec::new();
    if l.has_time() {
        coords.push(s);
    }
    coords.extend_from_slice(x);
    let mut idx = Vec::new();
    for (ax, &c) in coords.iter().enumerate() {
        let u = c / l.step(ax);
        let k = u.round();
        if (u - k).abs() > 1e-9 * u.abs().max(1.0) || k < 0.0 || k >= l.size(ax) as f64 {
            return Err(Error::MalformedGrid(format!(
                "coordinate {c} on axis {ax} is not a lattice node"
            )));
        }
        idx.push(k as usize);
    }
    Ok(Node(idx))
}

/// Flat indices of the stencil around `base`; the support must not wrap.
fn placed(l: &Lattice, stencil: &TestStencil, base: &Node) -> Result<Vec<usize>> {
    for (ax, (&b, &r)) in base.0.iter().zip(&stencil.reach).enumerate() {
        let b = b as i64;
        if b - r < 0 || b + r >= l.size(ax) as i64 {
            return Err(Error::MalformedGrid(format!(
                "support around node {b} leaves the lattice on axis {ax}"
            )));
        }
    }
    Ok(stencil
        .offsets
        .iter()
        .map(|off| {
            let m: Vec<usize> = off
                .iter()
                .zip(&base.0)
                .map(|(&o, &b)| (b as i64 + o) as usize)
                .collect();
            l.index(&m)
        })
        .collect())
}

fn kfield(field: &LatticeField) -> Result<&[f64]> {
    field.kfield.as_deref().ok_or_else(|| {
        Error::Degenerate(
            "field carries no K-convolution; sample it from a model with a kernel".into(),
        )
    })
}

/// ⟨Ẇⁿ, ψ^ℓ_{s,x}⟩ by lattice quadrature.
pub fn pair_first(
    field: &LatticeField,
    psi: &TestFunction,
    ell: u32,
    s: f64,
    x: &[f64],
) -> Result<f64> {
    let l = &field.lattice;
    let st = test_stencil(l, psi, ell)?;
    let base = node_at(l, s, x)?;
    pair_first_stencil(field, &st, &base)
}

pub fn pair_first_stencil(field: &LatticeField, st: &TestStencil, base: &Node) -> Result<f64> {
    let at = placed(&field.lattice, st, base)?;
    Ok(at
        .iter()
        .zip(&st.weights)
        .map(|(&k, &w)| w * field.samples[k])
        .sum())
}

/// ⟨W²_{z0}, ψ^ℓ_{center}⟩ for a test function centred at `center` and the
/// second level based at `z0` (not renormalized).
pub fn pair_second_at(
    field: &LatticeField,
    st: &TestStencil,
    center: &Node,
    z0: &Node,
) -> Result<f64> {
    let l = &field.lattice;
    let v = kfield(field)?;
    let at = placed(l, st, center)?;
    let v0 = v[l.index(&z0.0)];
    Ok(at
        .iter()
        .zip(&st.weights)
        .map(|(&k, &w)| w * (v[k] - v0) * field.samples[k])
        .sum())
}

/// ⟨Ŵ^{2,n}_{s,x}, ψ^ℓ_{s,x}⟩ = ⟨W²_{s,x}, ψ^ℓ_{s,x}⟩ - c ⟨1, ψ^ℓ_{s,x}⟩.
pub fn pair_second_renormalized(
    field: &LatticeField,
    c: f64,
    psi: &TestFunction,
    ell: u32,
    s: f64,
    x: &[f64],
) -> Result<f64> {
    let st = test_stencil(&field.lattice, psi, ell)?;
    let base = node_at(&field.lattice, s, x)?;
    Ok(pair_second_at(field, &st, &base, &base)? - c * st.mass())
}

/// Both sides of the K-Chen relation for one test function and two base
/// points.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChenResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_error: f64,
    pub rel_error: f64,
}

/// ⟨W²_{z0} - W²_{z1}, φ⟩ against ⟨(V(z1) - V(z0)) Ẇ, φ⟩, with φ the
/// stencil centred at `center`. Any constant subtracted from both second
/// levels cancels on the left.
pub fn k_chen_check(
    field: &LatticeField,
    st: &TestStencil,
    center: &Node,
    z0: &Node,
    z1: &Node,
) -> Result<ChenResidual> {
    let l = &field.lattice;
    let v = kfield(field)?;
    let lhs = pair_second_at(field, st, center, z0)? - pair_second_at(field, st, center, z1)?;
    let inc = v[l.index(&z1.0)] - v[l.index(&z0.0)];
    let at = placed(l, st, center)?;
    let rhs = inc
        * at.iter()
            .zip(&st.weights)
            .map(|(&k, &w)| w * field.samples[k])
            .sum::<f64>();
    let abs_error = (lhs - rhs).abs();
    let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    Ok(ChenResidual {
        lhs,
        rhs,
        abs_error,
        rel_error: abs_error / scale,
    })
}

/// 2∫_0^∞ f(u) u^a du for even integrands.
fn even_line<F: Fn(f64) -> f64>(f: F, a: f64) -> Result<f64> {
    let tol = Tolerance::new(1e-300, 1e-10).with_max_cells(20_000);
    Ok(2.0 * integrate_halfline(f, a, tol).require()?.value)
}

/// Spatial factor ∫ S(2^{-n}|ξ|)² ∏|Fb_i(δξ_i)|² N_H(ξ) dξ, or a variant
/// with the mollifier part replaced by `moll`.
fn space_integral(
    hurst: &HurstConfig,
    psi: &TestFunction,
    delta: f64,
    moll: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<f64> {
    let f = psi.factors();
    let off = f.len() - hurst.d();
    if hurst.d() == 1 {
        let a1 = 1.0 - 2.0 * hurst.h()[0];
        return even_line(|u| moll(u) * f[off].fourier(delta * u).powi(2), a1);
    }
    let spatial = SpectralWeight::new(hurst.spatial_part()?);
    let g = |xi: &[f64]| {
        let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let t: f64 = xi
            .iter()
            .enumerate()
            .map(|(i, &u)| f[off + i].fourier(delta * u).powi(2))
            .product();
        moll(r) * t
    };
    Ok(
        integrate_singular(&g, &spatial, &Domain::Full, Tolerance::new(1e-300, 1e-9))?
            .require()?
            .value,
    )
}

/// Continuum E|⟨Ẇⁿ, ψ^ℓ_{s,x}⟩|² = c² ∫ |Fρ_n|² |Fψ^ℓ|² N.
pub fn exact_var_first(
    hurst: &HurstConfig,
    m: &Mollifier,
    n: u32,
    psi: &TestFunction,
    ell: u32,
) -> Result<f64> {
    check_inputs(hurst, m, psi)?;
    let c2 = normalization_constants(hurst)?.c_squared();
    let a = 2f64.powi(-(n as i32));
    let delta = 2f64.powi(-(ell as i32));
    let sc = psi.normalization();
    let f0 = &psi.factors()[0];
    let time = match hurst.h0() {
        Some(h0) => even_line(
            |l| m.time_factor(a * a * l).norm_sqr() * f0.fourier(delta * delta * l).powi(2),
            1.0 - 2.0 * h0,
        )?,
        None => f0.fourier(0.0).powi(2),
    };
    let space = space_integral(hurst, psi, delta, &|r| m.space_factor(a * r).powi(2))?;
    Ok(c2 * sc * sc * time * space)
}

/// Continuum E|⟨Ẇⁿ - Ẇᵐ, ψ^ℓ⟩|² = c² ∫ |Fρ_n - Fρ_m|² |Fψ^ℓ|² N, split into
/// separable pieces.
pub fn exact_var_first_difference(
    hurst: &HurstConfig,
    m: &Mollifier,
    n: u32,
    mm: u32,
    psi: &TestFunction,
    ell: u32,
) -> Result<f64> {
    check_inputs(hurst, m, psi)?;
    let c2 = normalization_constants(hurst)?.c_squared();
    let an = 2f64.powi(-(n as i32));
    let am = 2f64.powi(-(mm as i32));
    let delta = 2f64.powi(-(ell as i32));
    let sc = psi.normalization();
    let f0 = &psi.factors()[0];
    let cross_time = |p: f64, q: f64| -> Result<f64> {
        match hurst.h0() {
            Some(h0) => even_line(
                |l| {
                    let v = m.time_factor(p * p * l) * m.time_factor(q * q * l).conj();
                    v.re * f0.fourier(delta * delta * l).powi(2)
                },
                1.0 - 2.0 * h0,
            ),
            None => Ok(f0.fourier(0.0).powi(2)),
        }
    };
    let cross_space = |p: f64, q: f64| {
        space_integral(hurst, psi, delta, &move |r| {
            m.space_factor(p * r) * m.space_factor(q * r)
        })
    };
    let nn = cross_time(an, an)? * cross_space(an, an)?;
    let mmv = cross_time(am, am)? * cross_space(am, am)?;
    let nm = cross_time(an, am)? * cross_space(an, am)?;
    Ok(c2 * sc * sc * (nn + mmv - 2.0 * nm).max(0.0))
}

fn check_inputs(hurst: &HurstConfig, m: &Mollifier, psi: &TestFunction) -> Result<()> {
    if hurst.d() != m.d() || hurst.d() != psi.d() {
        return Err(Error::Degenerate(
            "Hurst configuration, mollifier and test function disagree on d".into(),
        ));
    }
    Ok(())
}

/// Moments of the renormalized second-level pairing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondMoments {
    pub mean: f64,
    /// Σ a_i a_j E[D_i D_j] E[W_i W_j].
    pub u: f64,
    /// Σ a_i a_j E[D_i W_j] E[W_i D_j].
    pub v: f64,
    pub variance: f64,
    pub second_moment: f64,
}

/// Lattice-exact E and Var of ⟨Ẇⁿ, ψ^ℓ⟩ for the model's own discretized
/// spectral measure (the oracle for Monte Carlo on that lattice).
pub fn lattice_var_first(model: &SpectralModel, psi: &TestFunction, ell: u32) -> Result<f64> {
    let l = model.lattice();
    let st = test_stencil(l, psi, ell)?;
    let fft = NdFft::new(&l.dims())?;
    let mut a: Vec<Complex64> = st
        .periodic_array(l)
        .into_iter()
        .map(|v| Complex64::new(v, 0.0))
        .collect();
    fft.forward(&mut a)?;
    Ok(model
        .masses()
        .iter()
        .zip(&a)
        .map(|(mu, x)| mu * x.norm_sqr())
        .sum())
}

/// Lattice-exact E|⟨Ẇⁿ - Ẇᵐ, ψ^ℓ⟩|² for two models on one lattice driven
/// by the same Gaussians.
pub fn lattice_var_first_difference(
    a: &SpectralModel,
    b: &SpectralModel,
    psi: &TestFunction,
    ell: u32,
) -> Result<f64> {
    let l = a.lattice();
    if l != b.lattice() {
        return Err(Error::MalformedGrid(
            "models live on different lattices".into(),
        ));
    }
    let st = test_stencil(l, psi, ell)?;
    let fft = NdFft::new(&l.dims())?;
    let mut w: Vec<Complex64> = st
        .periodic_array(l)
        .into_iter()
        .map(|v| Complex64::new(v, 0.0))
        .collect();
    fft.forward(&mut w)?;
    Ok(a.amplitudes()
        .iter()
        .zip(b.amplitudes())
        .zip(&w)
        .map(|((x, y), z)| (x - y).norm_sqr() * z.norm_sqr())
        .sum())
}

/// Lattice-exact mean and variance of ⟨Ŵ^{2,n}_{z0}, ψ^ℓ_{z0}⟩ with
/// renormalization constant `c`. The model must carry a kernel.
///
/// With a the stencil placed at z0 = 0, R = a ⋆ a its autocorrelation and
/// C_WW, C_VW, C_VV the lattice covariances,
///
///   mean = Σ a_i (C_VW(0) - C_VW(-z_i)) - c Σ a_i,
///   U = Σ_τ R C_WW C_VV - 2 Σ_i a_i C_VV(z_i)(C_WW∗a)_i + C_VV(0) Σ_i a_i (C_WW∗a)_i,
///   V = Σ_τ R(τ) C_VW(τ) C_VW(-τ) - 2 Σ_i a_i C_VW(-z_i)(C_VW∗a)_i + (Σ_i a_i C_VW(-z_i))².
pub fn lattice_moments_second(
    model: &SpectralModel,
    c: f64,
    psi: &TestFunction,
    ell: u32,
) -> Result<SecondMoments> {
    let l = model.lattice();
    let st = test_stencil(l, psi, ell)?;
    let cov = model.lattice_covariances()?;
    let (cvw, cvv) = match (&cov.cvw, &cov.cvv) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::Degenerate(
                "the spectral model carries no kernel".into(),
            ))
        }
    };
    let fft = NdFft::new(&l.dims())?;
    let a = st.periodic_array(l);
    let n = l.len();
    let neg = |k: usize| -> usize {
        let m = l.unravel(k);
        let r: Vec<usize> = m
            .iter()
            .enumerate()
            .map(|(ax, &i)| (l.size(ax) - i) % l.size(ax))
            .collect();
        l.index(&r)
    };
    let to_c =
        |v: &[f64]| -> Vec<Complex64> { v.iter().map(|&x| Complex64::new(x, 0.0)).collect() };
    let mut ah = to_c(&a);
    fft.forward(&mut ah)?;
    // autocorrelation R(τ) = Σ_i a_{i+τ} a_i
    let mut r: Vec<Complex64> = ah
        .iter()
        .map(|v| Complex64::new(v.norm_sqr(), 0.0))
        .collect();
    fft.inverse(&mut r)?;
    let conv = |c: &[f64]| -> Result<Vec<f64>> {
        let mut ch = to_c(c);
        fft.forward(&mut ch)?;
        for (x, y) in ch.iter_mut().zip(&ah) {
            *x *= y;
        }
        fft.inverse(&mut ch)?;
        Ok(ch.iter().map(|v| v.re).collect())
    };
    let cw_a = conv(&cov.cww)?;
    let cv_a = conv(cvw)?;
    let mass: f64 = a.iter().sum();
    let nz: Vec<usize> = (0..n).filter(|&k| a[k] != 0.0).collect();
    let m1: f64 = nz.iter().map(|&k| a[k] * cvw[neg(k)]).sum();
    let mean = mass * cvw[0] - m1 - c * mass;
    let mut t1 = 0.0;
    let mut s1 = 0.0;
    for k in 0..n {
        let rk = r[k].re;
        t1 += rk * cov.cww[k] * cvv[k];
        s1 += rk * cvw[k] * cvw[neg(k)];
    }
    let mut t2 = 0.0;
    let mut t3 = 0.0;
    let mut s2 = 0.0;
    for &k in &nz {
        t2 += a[k] * cvv[k] * cw_a[k];
        t3 += a[k] * cw_a[k];
        s2 += a[k] * cvw[neg(k)] * cv_a[k];
    }
    let u = t1 - 2.0 * t2 + cvv[0] * t3;
    let v = s1 - 2.0 * s2 + m1 * m1;
    let variance = u + v;
    Ok(SecondMoments {
        mean,
        u,
        v,
        variance,
        second_moment: mean * mean + variance,
    })
}

/// Lattice used by [`exact_var_second`]: the level-n resolution refined so
/// that ψ^ℓ has at least `nodes` nodes per support axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentLattice {
    pub nodes: usize,
    /// Box length at ℓ = 0 (time and space).
    pub box_coarse: f64,
    /// Box length for ℓ >= 1.
    pub box_fine: f64,
}

impl Default for MomentLattice {
    fn default() -> Self {
        MomentLattice {
            nodes: 8,
            box_coarse: 4.0,
            box_fine: 4.0,
        }
    }
}

impl MomentLattice {
    pub fn lattice(&self, hurst: &HurstConfig, n: u32, ell: u32) -> Result<Lattice> {
        let len = if ell == 0 {
            self.box_coarse
        } else {
            self.box_fine
        };
        let base = Lattice::for_level(hurst, n, len, len)?;
        let delta = 2f64.powi(-(ell as i32));
        let refine = |h: f64, support: f64| {
            let mut h = h;
            while support / h < self.nodes as f64 {
                h *= 0.5;
            }
            h
        };
        let dx = refine(base.dx, 2.0 * delta);
        let count = |h: f64| ((len / h).round() as usize).max(8).next_power_of_two();
        match hurst.mode() {
            Mode::SpaceTime => {
                let dt = refine(base.dt, 2.0 * delta * delta);
                Lattice::space_time(hurst.d(), count(dt), dt, count(dx), dx)
            }
            Mode::Spatial => Lattice::spatial(hurst.d(), count(dx), dx),
        }
    }
}

/// Second moment of ⟨Ŵ^{2,n}, ψ^ℓ⟩ = ⟨Eⁿ, ψ^ℓ⟩² + U + V, evaluated exactly
/// for the discretized spectral measure on the lattice chosen by `grid`;
/// c^{(n)} is the quadrature value of the renormalization constant.
pub fn exact_var_second(
    hurst: &HurstConfig,
    m: &Mollifier,
    kernel: &LocalizedHeatKernel,
    n: u32,
    psi: &TestFunction,
    ell: u32,
    grid: MomentLattice,
) -> Result<SecondMoments> {
    check_inputs(hurst, m, psi)?;
    if hurst.d() > 2 {
        return Err(Error::Unsupported(
            "second-level moments are implemented for d <= 2".into(),
        ));
    }
    let l = grid.lattice(hurst, n, ell)?;
    let c = renormalization(hurst, m, kernel, n)?;
    let model = SpectralModel::new(hurst, m, n, &l)?.with_kernel(kernel)?;
    lattice_moments_second(&model, c, psi, ell)
}

/// c^{(n)} in either mode.
pub fn renormalization(
    hurst: &HurstConfig,
    m: &Mollifier,
    kernel: &LocalizedHeatKernel,
    n: u32,
) -> Result<f64> {
    match hurst.mode() {
        Mode::SpaceTime => c_n(m, hurst, n),
        Mode::Spatial => crate::quadrature::c_n_spatial_kernel(m, hurst, kernel, n),
    }
}

/// ⟨Eⁿ_{s,x}, ψ^ℓ_{s,x}⟩ with E[W^{2,n}_{s,x}] = c^{(n)} + Eⁿ_{s,x}:
///
///   ∫ψ · (c² ∫ μ_n Re FK - c^{(n)}) - c² ∫ μ_n Re FK · Fψ(4^{-ℓ}λ, 2^{-ℓ}ξ),
///
/// with μ_n = |Fρ_n|² N, on a tensor rule (space-time, d = 1).
pub fn mean_error_term(
    hurst: &HurstConfig,
    m: &Mollifier,
    kernel: &LocalizedHeatKernel,
    n: u32,
    psi: &TestFunction,
    ell: u32,
) -> Result<f64> {
    check_inputs(hurst, m, psi)?;
    let h0 = hurst.h0().ok_or_else(|| {
        Error::Unsupported("mean_error_term is implemented in space-time mode".into())
    })?;
    if hurst.d() != 1 {
        return Err(Error::Unsupported(
            "mean_error_term is implemented for d = 1".into(),
        ));
    }
    let c2 = normalization_constants(hurst)?.c_squared();
    let a0 = 1.0 - 2.0 * h0;
    let a1 = 1.0 - 2.0 * hurst.h()[0];
    let sc = 2f64.powi(-(n as i32));
    let lt = crate::field_synthesis::spectral_cutoff(
        |l| m.time_factor(sc * sc * l).norm_sqr(),
        a0,
        4f64.powi(n as i32),
        4f64.powi(n as i32 + 12),
    );
    let lx = crate::field_synthesis::spectral_cutoff(
        |u| m.space_factor(sc * u).powi(2),
        a1,
        2f64.powi(n as i32),
        2f64.powi(n as i32 + 12),
    );
    let rl = PowerRule::new(a0, lt, 1.0);
    let rx = PowerRule::new(a1, lx, 0.5);
    let table = kernel.fourier_table(Part::K, &rl.nodes, &rx.nodes)?;
    let delta = 2f64.powi(-(ell as i32));
    let mut q0 = 0.0;
    let mut ql = 0.0;
    for (i, (&l, &wl)) in rl.nodes.iter().zip(&rl.weights).enumerate() {
        let tl = m.time_factor(sc * sc * l).norm_sqr() * wl;
        for (j, (&u, &wu)) in rx.nodes.iter().zip(&rx.weights).enumerate() {
            let g = tl * wu * m.space_factor(sc * u).powi(2) * table.get(i, j).re;
            q0 += g;
            ql += g * psi.fourier(delta * delta * l, &[delta * u]);
        }
    }
    let q0 = 4.0 * c2 * q0;
    let ql = 4.0 * c2 * ql;
    Ok(psi.integral() * (q0 - c_n(m, hurst, n)?) - ql)
}

/// w(x) = (1 + |x|)^κ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    pub kappa: f64,
}

impl Weight {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0) {
            return Err(Error::Degenerate(format!(
                "weight exponent κ = {kappa} must be nonnegative"
            )));
        }
        Ok(Weight { kappa })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt()).powf(self.kappa)
    }

    /// Bounds (c1, c2) on w(x)/w(y) for |x - y| <= M: (1 + M)^{∓κ}.
    pub fn ratio_bounds(&self, m: f64) -> (f64, f64) {
        ((1.0 + m).powf(-self.kappa), (1.0 + m).powf(self.kappa))
    }
}

/// Pairings of one realization at dyadic base points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairingEntry {
    pub psi: usize,
    pub ell: u32,
    pub s: f64,
    pub x: Vec<f64>,
    pub first: f64,
    pub second: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KRoughPathSample {
    pub level: u32,
    pub c_n: f64,
    pub entries: Vec<PairingEntry>,
    /// Centre of the lattice box; weights are evaluated at x - centre.
    pub centre: Vec<f64>,
}

/// Which level of the rough path an estimate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathLevel {
    First,
    Second,
}

/// Which pairings to collect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub ells: Vec<u32>,
    /// Base times lie in [t_lo, t_hi] (ignored in spatial mode).
    pub t_lo: f64,
    pub t_hi: f64,
    /// Base points satisfy |x_i - centre_i| <= half_width.
    pub half_width: f64,
    /// Keep at most this many base points per scale, evenly thinned.
    pub max_points: usize,
}

/// Evaluates first and renormalized second level pairings for every ψ in
/// `family`, every scale ℓ of the plan, on the dyadic lattice Λ^ℓ
/// restricted to the plan's window and to supports inside the lattice.
pub fn collect_sample(
    field: &LatticeField,
    c: f64,
    family: &[TestFunction],
    plan: &SamplePlan,
) -> Result<KRoughPathSample> {
    let layout = SampleLayout::new(&field.lattice, family, plan)?;
    layout.collect(field, c)
}

/// Stencils and base points of a [`SamplePlan`] on one lattice, reusable
/// across realizations.
#[derive(Debug, Clone)]
pub struct SampleLayout {
    lattice: Lattice,
    centre: Vec<f64>,
    blocks: Vec<(usize, u32, TestStencil, Vec<Node>)>,
}

impl SampleLayout {
    pub fn new(l: &Lattice, family: &[TestFunction], plan: &SamplePlan) -> Result<Self> {
        let centre: Vec<f64> = (0..l.d)
            .map(|i| 0.5 * l.period(i + usize::from(l.has_time())))
            .collect();
        let mut blocks = Vec::new();
        for (pi, psi) in family.iter().enumerate() {
            for &ell in &plan.ells {
                let st = test_stencil(l, psi, ell)?;
                let bases = dyadic_bases(l, ell, &st, plan, &centre)?;
                blocks.push((pi, ell, st, bases));
            }
        }
        Ok(SampleLayout {
            lattice: l.clone(),
            centre,
            blocks,
        })
    }

    pub fn collect(&self, field: &LatticeField, c: f64) -> Result<KRoughPathSample> {
        let l = &self.lattice;
        if &field.lattice != l {
            return Err(Error::MalformedGrid(
                "field lattice differs from the layout".into(),
            ));
        }
        let mut entries = Vec::new();
        for (pi, ell, st, bases) in &self.blocks {
            for node in bases {
                let first = pair_first_stencil(field, st, node)?;
                let second = if field.kfield.is_some() {
                    pair_second_at(field, st, node, node)? - c * st.mass()
                } else {
                    0.0
                };
                let coords = l.coords(&node.0);
                let (s, x) = if l.has_time() {
                    (coords[0], coords[1..].to_vec())
                } else {
                    (0.0, coords)
                };
                entries.push(PairingEntry {
                    psi: *pi,
                    ell: *ell,
                    s,
                    x,
                    first,
                    second,
                });
            }
        }
        Ok(KRoughPathSample {
            level: field.level,
            c_n: c,
            entries,
            centre: self.centre.clone(),
        })
    }
}

fn dyadic_bases(
    l: &Lattice,
    ell: u32,
    st: &TestStencil,
    plan: &SamplePlan,
    centre: &[f64],
) -> Result<Vec<Node>> {
    let axes = l.axes();
    let mut per_axis: Vec<Vec<usize>> = Vec::with_capacity(axes);
    for ax in 0..axes {
        let time = l.has_time() && ax == 0;
        let spacing = if time {
            4f64.powi(-(ell as i32))
        } else {
            2f64.powi(-(ell as i32))
        };
        let stride = (spacing / l.step(ax)).round().max(1.0) as usize;
        let r = st.reach[ax] as usize;
        let (lo, hi) = if time {
            (plan.t_lo, plan.t_hi)
        } else {
            let c = centre[ax - usize::from(l.has_time())];
            (c - plan.half_width, c + plan.half_width)
        };
        let h = l.step(ax);
        let mut v = Vec::new();
        let mut k = 0usize;
        while k < l.size(ax) {
            let c = k as f64 * h;
            if k >= r && k + r < l.size(ax) && c >= lo - 1e-12 && c <= hi + 1e-12 {
                v.push(k);
            }
            k += stride;
        }
        if v.is_empty() {
            return Err(Error::MalformedGrid(format!(
                "no admissible base point on axis {ax} at scale {ell}"
            )));
        }
        per_axis.push(v);
    }
    let total: usize = per_axis.iter().map(|v| v.len()).product();
    let keep = plan.max_points.max(1);
    let stride = total.div_ceil(keep).max(1);
    let mut out = Vec::new();
    let mut flat = 0usize;
    while flat < total {
        let mut rem = flat;
        let mut node = vec![0usize; axes];
        for ax in (0..axes).rev() {
            node[ax] = per_axis[ax][rem % per_axis[ax].len()];
            rem /= per_axis[ax].len();
        }
        out.push(Node(node));
        flat += stride;
    }
    Ok(out)
}

/// sup over entries of 2^{ℓβ} |pairing| / w(x - centre)², with β = α for
/// the first level and 2α + 2 for the second. Every scale up to `depth`
/// must be present.
pub fn besov_norm_estimate(
    sample: &KRoughPathSample,
    alpha: f64,
    w: &Weight,
    level: PathLevel,
    depth: u32,
) -> Result<f64> {
    for ell in 0..=depth {
        if !sample.entries.iter().any(|e| e.ell == ell) {
            return Err(Error::UnderResolved(format!(
                "sample has no pairings at scale ℓ = {ell}"
            )));
        }
    }
    let beta = match level {
        PathLevel::First => alpha,
        PathLevel::Second => 2.0 * alpha + 2.0,
    };
    let mut best = 0.0f64;
    for e in sample.entries.iter().filter(|e| e.ell <= depth) {
        let y: Vec<f64> = e.x.iter().zip(&sample.centre).map(|(a, b)| a - b).collect();
        let v = match level {
            PathLevel::First => e.first,
            PathLevel::Second => e.second,
        };
        best = best.max(2f64.powf(e.ell as f64 * beta) * v.abs() / w.eval(&y).powi(2));
    }
    Ok(best)
}

/// Σ_k 2^{-k} x_k / (1 + x_k), with x_k the norm on the k-th box.
pub fn weighted_distance(per_box: &[f64]) -> f64 {
    per_box
        .iter()
        .enumerate()
        .map(|(k, &x)| 2f64.powi(-(k as i32 + 1)) * x / (1.0 + x))
        .sum()
}

/// Difference of two samples taken at the same base points (first and
/// renormalized second levels subtract entrywise).
pub fn sample_difference(a: &KRoughPathSample, b: &KRoughPathSample) -> Result<KRoughPathSample> {
    if a.entries.len() != b.entries.len() {
        return Err(Error::MalformedGrid(
            "samples cover different base points".into(),
        ));
    }
    let entries = a
        .entries
        .iter()
        .zip(&b.entries)
        .map(|(x, y)| {
            if x.ell != y.ell || x.psi != y.psi || x.x != y.x || x.s != y.s {
                return Err(Error::MalformedGrid(
                    "samples cover different base points".into(),
                ));
            }
            Ok(PairingEntry {
                first: x.first - y.first,
                second: x.second - y.second,
                ..x.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KRoughPathSample {
        level: a.level,
        c_n: a.c_n - b.c_n,
        entries,
        centre: a.centre.clone(),
    })
}

/// Configuration of [`cauchy_study`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyConfig {
    /// Fine level n; differences Ẇⁿ - Ẇᵐ are taken for every m in `coarse`.
    pub n: u32,
    pub coarse: Vec<u32>,
    /// Scales at which second moments are estimated.
    pub ells: Vec<u32>,
    pub alpha: f64,
    pub weight: Weight,
    /// Time horizon of base points.
    pub horizon: f64,
    /// Box length in time and space.
    pub box_len: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Boxes k = 1..=boxes in the distance sum.
    pub boxes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CauchyRow {
    pub n: u32,
    pub m: u32,
    pub ell: u32,
    /// Monte Carlo mean of |⟨Ẇⁿ - Ẇᵐ, ψ^ℓ⟩|² at the box centre.
    pub mc_moment: f64,
    pub mc_se: f64,
    /// Lattice-exact value of the same moment.
    pub lattice_moment: f64,
    /// Continuum value.
    pub exact_moment: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CauchyDistance {
    pub n: u32,
    pub m: u32,
    /// Replica mean of the weighted first-level distance.
    pub first: f64,
    /// Replica mean of the weighted second-level distance.
    pub second: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CauchyTable {
    pub rows: Vec<CauchyRow>,
    pub distances: Vec<CauchyDistance>,
    /// Per ℓ, slope of log₂ mc_moment against m.
    pub slopes: Vec<(u32, f64)>,
}

/// Coupled realizations of Ẇⁿ and Ẇᵐ (same Gaussians, lattice of level n)
/// and the statistics of their difference.
pub fn cauchy_study(
    hurst: &HurstConfig,
    m: &Mollifier,
    kernel: &LocalizedHeatKernel,
    psi: &TestFunction,
    cfg: &CauchyConfig,
) -> Result<CauchyTable> {
    if cfg.replicas < 2 || cfg.coarse.is_empty() || cfg.ells.is_empty() {
        return Err(Error::Degenerate(
            "cauchy study needs replicas >= 2, coarse levels and scales".into(),
        ));
    }
    if cfg.coarse.iter().any(|&c| c >= cfg.n) {
        return Err(Error::Degenerate(
            "coarse levels must lie below the fine level".into(),
        ));
    }
    let l = Lattice::for_level(hurst, cfg.n, cfg.box_len, cfg.box_len)?;
    let fine = SpectralModel::new(hurst, m, cfg.n, &l)?.with_kernel(kernel)?;
    let mult = fine.multiplier().cloned().expect("kernel attached");
    let coarse: Vec<SpectralModel> = cfg
        .coarse
        .iter()
        .map(|&mm| SpectralModel::new(hurst, m, mm, &l)?.with_multiplier(mult.clone()))
        .collect::<Result<_>>()?;
    let c_fine = renormalization(hurst, m, kernel, cfg.n)?;
    let c_coarse: Vec<f64> = cfg
        .coarse
        .iter()
        .map(|&mm| renormalization(hurst, m, kernel, mm))
        .collect::<Result<_>>()?;
    let stencils: Vec<_> = cfg
        .ells
        .iter()
        .map(|&e| test_stencil(&l, psi, e))
        .collect::<Result<_>>()?;
    let centre_node: Vec<usize> = (0..l.axes())
        .map(|ax| {
            if l.has_time() && ax == 0 {
                l.nt / 2
            } else {
                l.nx / 2
            }
        })
        .collect();
    let centre = Node(centre_node);
    let depth = *cfg.ells.iter().max().expect("nonempty");
    let plan = SamplePlan {
        ells: (0..=depth).collect(),
        t_lo: 1.0,
        t_hi: (1.0 + cfg.horizon).min(l.period(0) - 1.0),
        half_width: (cfg.boxes as f64).min(0.5 * l.period(l.axes() - 1) - 1.0),
        max_points: 24,
    };
    let layout = SampleLayout::new(&l, std::slice::from_ref(psi), &plan)?;
    let nc = cfg.coarse.len();
    let ne = cfg.ells.len();
    let mut sums = vec![0.0; nc * ne];
    let mut sq = vec![0.0; nc * ne];
    let mut dist_first = vec![0.0; nc];
    let mut dist_second = vec![0.0; nc];
    let mut count = 0usize;
    let pairs = cfg.replicas.div_ceil(2);
    for r in 0..pairs {
        let seed = mix_seed(cfg.seed, r as u64);
        let (f1, f2) = fine.sample_pair(seed)?;
        let coarse_pairs: Vec<(LatticeField, LatticeField)> = coarse
            .iter()
            .map(|cm| cm.sample_pair(seed))
            .collect::<Result<_>>()?;
        for (which, ff) in [f1, f2].into_iter().enumerate() {
            if count >= cfg.replicas {
                break;
            }
            count += 1;
            let fine_sample = layout.collect(&ff, c_fine)?;
            for (ci, cp) in coarse_pairs.iter().enumerate() {
                let cf = if which == 0 { &cp.0 } else { &cp.1 };
                let diff = ff.difference(cf)?;
                for (ei, st) in stencils.iter().enumerate() {
                    let v = pair_first_stencil(&diff, st, &centre)?;
                    sums[ci * ne + ei] += v * v;
                    sq[ci * ne + ei] += v.powi(4);
                }
                let cs = layout.collect(cf, c_coarse[ci])?;
                let d = sample_difference(&fine_sample, &cs)?;
                let mut xf = Vec::new();
                let mut xs = Vec::new();
                for k in 1..=cfg.boxes {
                    let sub = restrict(&d, k as f64);
                    xf.push(
                        besov_norm_estimate(&sub, cfg.alpha, &cfg.weight, PathLevel::First, depth)
                            .unwrap_or(0.0),
                    );
                    xs.push(
                        besov_norm_estimate(&sub, cfg.alpha, &cfg.weight, PathLevel::Second, depth)
                            .unwrap_or(0.0),
                    );
                }
                dist_first[ci] += weighted_distance(&xf);
                dist_second[ci] += weighted_distance(&xs);
            }
        }
    }
    let nr = count as f64;
    let mut rows = Vec::new();
    for (ci, (&mm, cm)) in cfg.coarse.iter().zip(&coarse).enumerate() {
        for (ei, &ell) in cfg.ells.iter().enumerate() {
            let mean = sums[ci * ne + ei] / nr;
            let var = (sq[ci * ne + ei] / nr - mean * mean).max(0.0) * nr / (nr - 1.0);
            rows.push(CauchyRow {
                n: cfg.n,
                m: mm,
                ell,
                mc_moment: mean,
                mc_se: (var / nr).sqrt(),
                lattice_moment: lattice_var_first_difference(&fine, cm, psi, ell)?,
                exact_moment: exact_var_first_difference(hurst, m, cfg.n, mm, psi, ell)?,
            });
        }
    }
    let distances = cfg
        .coarse
        .iter()
        .enumerate()
        .map(|(ci, &mm)| CauchyDistance {
            n: cfg.n,
            m: mm,
            first: dist_first[ci] / nr,
            second: dist_second[ci] / nr,
        })
        .collect();
    let mut slopes = Vec::new();
    if cfg.coarse.len() >= 2 {
        for &ell in &cfg.ells {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.ell == ell && r.mc_moment > 0.0)
                .map(|r| (r.m as f64, r.mc_moment.log2()))
                .collect();
            if pts.len() >= 2 {
                let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
                slopes.push((ell, least_squares_slope(&xs, &ys)));
            }
        }
    }
    Ok(CauchyTable {
        rows,
        distances,
        slopes,
    })
}

fn restrict(s: &KRoughPathSample, k: f64) -> KRoughPathSample {
    let entries = s
        .entries
        .iter()
        .filter(|e| {
            e.x.iter()
                .zip(&s.centre)
                .all(|(a, b)| (a - b).abs() <= k + 1e-12)
        })
        .cloned()
        .collect();
    KRoughPathSample {
        entries,
        ..s.clone()
    }
}

/// Slope of an ordinary least-squares line; two points are allowed.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    if xs.len() >= 4 {
        if let Ok(f) = slope_fit(xs, ys) {
            return f.slope;
        }
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Monte Carlo mean and variance of the first and renormalized second
/// pairings at the centre node, over `replicas` fields.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MonteCarloMoments {
    pub replicas: usize,
    pub first_mean: f64,
    pub first_var: f64,
    /// Standard error of the first-level variance estimate.
    pub first_var_se: f64,
    pub second_mean: f64,
    pub second_mean_se: f64,
    pub second_var: f64,
    pub second_var_se: f64,
}

/// Replica statistics of ⟨Ẇⁿ, ψ^ℓ⟩ and ⟨Ŵ^{2,n}, ψ^ℓ⟩ at the lattice centre.
pub fn monte_carlo_moments(
    model: &SpectralModel,
    c: f64,
    psi: &TestFunction,
    ell: u32,
    replicas: usize,
    seed: u64,
) -> Result<MonteCarloMoments> {
    if replicas < 2 {
        return Err(Error::Degenerate("need at least two replicas".into()));
    }
    let l = model.lattice();
    let st = test_stencil(l, psi, ell)?;
    let centre = Node((0..l.axes()).map(|ax| l.size(ax) / 2).collect());
    let with_k = model.multiplier().is_some();
    let pairs = replicas.div_ceil(2);
    let vals: Vec<Vec<(f64, f64)>> = crate::par::map_range(pairs, |r| {
        let seed = mix_seed(seed, r as u64);
        let Ok((a, b)) = model.sample_pair(seed) else {
            return Vec::new();
        };
        [a, b]
            .iter()
            .map(|f| {
                let p1 = pair_first_stencil(f, &st, &centre).unwrap_or(f64::NAN);
                let p2 = if with_k {
                    pair_second_at(f, &st, &centre, &centre).unwrap_or(f64::NAN) - c * st.mass()
                } else {
                    f64::NAN
                };
                (p1, p2)
            })
            .collect()
    });
    let flat: Vec<(f64, f64)> = vals.into_iter().flatten().take(replicas).collect();
    if flat.len() < replicas || flat.iter().any(|(a, _)| !a.is_finite()) {
        return Err(Error::NonFinite("Monte Carlo replica failed".into()));
    }
    let stats = |xs: &[f64]| -> (f64, f64, f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        // standard error of the sample variance
        let var_se = ((m4 - var * var * (n - 3.0) / (n - 1.0)) / n)
            .max(0.0)
            .sqrt();
        (mean, var, (var / n).sqrt(), var_se)
    };
    let firsts: Vec<f64> = flat.iter().map(|p| p.0).collect();
    let seconds: Vec<f64> = flat.iter().map(|p| p.1).collect();
    let (m1, v1, _, v1se) = stats(&firsts);
    let (m2, v2, m2se, v2se) = if with_k {
        stats(&seconds)
    } else {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    };
    Ok(MonteCarloMoments {
        replicas,
        first_mean: m1,
        first_var: v1,
        first_var_se: v1se,
        second_mean: m2,
        second_mean_se: m2se,
        second_var: v2,
        second_var_se: v2se,
    })
}

/// log₂ slope of a positive sequence against its index values.
pub fn log2_slope(xs: &[f64], values: &[f64]) -> Result<f64> {
    if values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Degenerate("log slope needs positive values".into()));
    }
    let ys: Vec<f64> = values.iter().map(|v| v.log2()).collect();
    Ok(least_squares_slope(xs, &ys))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (HurstConfig, Mollifier, TestFunction) {
        (
            HurstConfig::space_time(0.75, &[0.45]).unwrap(),
            Mollifier::gauss_gauss(1),
            TestFunction::bump(1, 5).unwrap(),
        )
    }

    #[test]
    fn constant_field_pairs_to_integral() {
        let (_, _, psi) = setup();
        let l = Lattice::space_time(1, 256, 1.0 / 64.0, 64, 1.0 / 16.0).unwrap();
        let f = LatticeField::from_samples(l.clone(), vec![2.5; l.len()]).unwrap();
        let v = pair_first(&f, &psi, 0, 2.0, &[2.0]).unwrap();
        assert!((v - 2.5 * psi.integral()).abs() < 1e-6 * psi.integral().abs());
    }

    #[test]
    fn under_resolved_scale_is_rejected() {
        let (_, _, psi) = setup();
        let l = Lattice::space_time(1, 64, 1.0 / 16.0, 32, 1.0 / 8.0).unwrap();
        assert!(matches!(
            test_stencil(&l, &psi, 2),
            Err(Error::UnderResolved(_))
        ));
    }

    #[test]
    fn lattice_first_variance_matches_mode_sum() {
        let (h, m, psi) = setup();
        let l = Lattice::space_time(1, 64, 1.0 / 16.0, 32, 1.0 / 8.0).unwrap();
        let model = SpectralModel::new(&h, &m, 1, &l).unwrap();
        let v = lattice_var_first(&model, &psi, 0).unwrap();
        // direct Σ_ij a_i a_j C(i - j)
        let cov = model.lattice_covariances().unwrap();
        let st = test_stencil(&l, &psi, 0).unwrap();
        let mut direct = 0.0;
        for (oi, wi) in st.offsets.iter().zip(&st.weights) {
            for (oj, wj) in st.offsets.iter().zip(&st.weights) {
                let lag: Vec<usize> = (0..2)
                    .map(|a| (oi[a] - oj[a]).rem_euclid(l.size(a) as i64) as usize)
                    .collect();
                direct += wi * wj * cov.cww[l.index(&lag)];
            }
        }
        assert!((v - direct).abs() < 1e-10 * direct);
    }

    #[test]
    fn wick_convolutions_match_direct_double_sum() {
        let (h, m, psi) = setup();
        let l = Lattice::space_time(1, 64, 1.0 / 32.0, 32, 1.0 / 8.0).unwrap();
        let k = LocalizedHeatKernel::build(1, 12, 1).unwrap();
        let model = SpectralModel::new(&h, &m, 1, &l)
            .unwrap()
            .with_kernel(&k)
            .unwrap();
        let got = lattice_moments_second(&model, 0.3, &psi, 1).unwrap();
        let cov = model.lattice_covariances().unwrap();
        let (cvw, cvv) = (cov.cvw.as_ref().unwrap(), cov.cvv.as_ref().unwrap());
        let st = test_stencil(&l, &psi, 1).unwrap();
        let at = |o: &[i64]| -> usize {
            let m: Vec<usize> = (0..2)
                .map(|a| o[a].rem_euclid(l.size(a) as i64) as usize)
                .collect();
            l.index(&m)
        };
        let zero = [0i64, 0];
        let mut mean = 0.0;
        let mut var = 0.0;
        for (oi, wi) in st.offsets.iter().zip(&st.weights) {
            let ni: Vec<i64> = oi.iter().map(|v| -v).collect();
            mean += wi * (cvw[0] - cvw[at(&ni)] - 0.3);
            for (oj, wj) in st.offsets.iter().zip(&st.weights) {
                let ij: Vec<i64> = (0..2).map(|a| oi[a] - oj[a]).collect();
                let ji: Vec<i64> = (0..2).map(|a| oj[a] - oi[a]).collect();
                let nj: Vec<i64> = oj.iter().map(|v| -v).collect();
                let dd = cvv[at(&ij)] - cvv[at(oi)] - cvv[at(oj)] + cvv[at(&zero)];
                let dw = cvw[at(&ij)] - cvw[at(&nj)];
                let wd = cvw[at(&ji)] - cvw[at(&ni)];
                var += wi * wj * (dd * cov.cww[at(&ij)] + dw * wd);
            }
        }
        assert!(
            (got.mean - mean).abs() < 1e-9 * mean.abs().max(1e-12),
            "{} vs {mean}",
            got.mean
        );
        assert!(
            (got.variance - var).abs() < 1e-9 * var,
            "{} vs {var}",
            got.variance
        );
    }

    #[test]
    fn chen_identity_holds_on_a_sample() {
        let (h, m, psi) = setup();
        let l = Lattice::space_time(1, 64, 1.0 / 32.0, 32, 1.0 / 8.0).unwrap();
        let k = LocalizedHeatKernel::build(1, 12, 1).unwrap();
        let model = SpectralModel::new(&h, &m, 1, &l)
            .unwrap()
            .with_kernel(&k)
            .unwrap();
        let f = model.sample(9).unwrap();
        let st = test_stencil(&l, &psi, 1).unwrap();
        let r = k_chen_check(
            &f,
            &st,
            &Node(vec![30, 16]),
            &Node(vec![10, 3]),
            &Node(vec![50, 28]),
        )
        .unwrap();
        assert!(r.rel_error < 1e-12, "{r:?}");
    }

    #[test]
    fn weight_ratio_bounds_hold() {
        let w = Weight::new(1.5).unwrap();
        let (lo, hi) = w.ratio_bounds(2.0);
        for (x, y) in [(0.0, 2.0), (3.0, 1.5), (-4.0, -2.5)] {
            let r = w.eval(&[x]) / w.eval(&[y]);
            assert!(r >= lo - 1e-12 && r <= hi + 1e-12);
        }
    }

    #[test]
    fn first_difference_vanishes_for_equal_levels() {
        let (h, m, psi) = setup();
        let v = exact_var_first_difference(&h, &m, 2, 2, &psi, 0).unwrap();
        let full = exact_var_first(&h, &m, 2, &psi, 0).unwrap();
        assert!(v < 1e-8 * full);
    }
}
