//! The heat kernel, its localized singular part K, the smooth remainder R and
//! the time-integrated kernel K̃.
//!
//! K0(s, x) = φ(s, x) p_s(x) where φ = θ(N) - θ(2N) and
//! N(s, x) = (s² + |x|⁴)^{1/4} is a smooth parabolic norm. Since
//! N(4^ℓ s, 2^ℓ x) = 2^ℓ N(s, x), the dilates telescope:
//! Σ_{ℓ=a}^{b} φ(4^ℓ s, 2^ℓ x) = θ(2^a N) - θ(2^{b+1} N). Hence K = θ(N) p
//! and R = (1 - θ(N)) p in the untruncated limit, which gives the Fourier
//! transforms in closed form up to a one-dimensional time integral over
//! s ∈ (0, 1).

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{adaptive, adaptive_panels, slope_fit, QuadratureResult, Tolerance};
use crate::special::{bessel_j0, composite_gl, sinc};

/// p_s(x) = (2πs)^{-d/2} exp(-|x|²/2s).
pub fn heat_kernel(s: f64, x: &[f64]) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::NonpositiveTime(s));
    }
    let r2: f64 = x.iter().map(|v| v * v).sum();
    Ok(heat_radial(x.len(), s, r2))
}

fn heat_radial(d: usize, s: f64, r2: f64) -> f64 {
    (2.0 * PI * s).powf(-0.5 * d as f64) * (-0.5 * r2 / s).exp()
}

/// Fp(λ, ξ) = (|ξ|²/2 + iλ)^{-1}.
pub fn heat_fourier(lambda: f64, xi: &[f64]) -> Result<Complex64> {
    let r2: f64 = xi.iter().map(|v| v * v).sum();
    if lambda == 0.0 && r2 == 0.0 {
        return Err(Error::OriginSingularity);
    }
    Ok(Complex64::new(1.0, 0.0) / Complex64::new(0.5 * r2, lambda))
}

/// Smooth parabolic norm (s² + |x|⁴)^{1/4}.
pub fn parabolic_norm(s: f64, x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    (s * s + r2 * r2).powf(0.25)
}

fn norm_radial(s: f64, r: f64) -> f64 {
    (s * s + r.powi(4)).powf(0.25)
}

/// Cutoff θ: one on [0, 1/2], zero on [1, ∞), smooth transition built from
/// f(t) = exp(-t^{-q}).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Partition {
    pub smoothness: u32,
}

impl Partition {
    pub fn new(smoothness: u32) -> Result<Self> {
        if smoothness == 0 || smoothness > 4 {
            return Err(Error::Degenerate(format!(
                "partition smoothness {smoothness} outside 1..=4"
            )));
        }
        Ok(Partition { smoothness })
    }

    fn f(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            (-t.powi(-(self.smoothness as i32))).exp()
        }
    }

    pub fn theta(&self, r: f64) -> f64 {
        if r <= 0.5 {
            1.0
        } else if r >= 1.0 {
            0.0
        } else {
            let t = 2.0 * (1.0 - r);
            let a = self.f(t);
            let b = self.f(1.0 - t);
            a / (a + b)
        }
    }

    /// 1 - θ(r), computed without cancellation near r = 1/2.
    pub fn theta_complement(&self, r: f64) -> f64 {
        if r <= 0.5 {
            0.0
        } else if r >= 1.0 {
            1.0
        } else {
            let t = 2.0 * (1.0 - r);
            let a = self.f(t);
            let b = self.f(1.0 - t);
            b / (a + b)
        }
    }

    /// φ as a function of the parabolic norm.
    pub fn phi_of_norm(&self, n: f64) -> f64 {
        self.theta(n) - self.theta(2.0 * n)
    }

    pub fn phi(&self, s: f64, x: &[f64]) -> f64 {
        self.phi_of_norm(parabolic_norm(s, x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Part {
    K,
    R,
}

/// Result of the dyadic Fourier series with its tail bound.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeriesValue {
    pub value: Complex64,
    pub tail_bound: f64,
    pub terms: usize,
}

#[derive(Debug)]
pub struct LocalizedHeatKernel {
    d: usize,
    partition: Partition,
    l_max: u32,
    k0_mass: f64,
    tilde_table: OnceLock<TildeTable>,
}

/// FK̃ ingredients: Hankel transform of G(ρ) = ∫_0^1 (1-θ(N)) p_s ds on a
/// fixed composite rule in r.
#[derive(Debug)]
struct TildeTable {
    rho: Vec<f64>,
    /// w_ρ G(ρ) on the ρ rule.
    g: Vec<f64>,
    r: Vec<f64>,
    w: Vec<f64>,
    a0: Vec<f64>,
}

const TILDE_R_MAX: f64 = 256.0;

impl LocalizedHeatKernel {
    /// Builds the kernel and checks the partition of unity at 100 random
    /// points of the annulus 2^{-10} <= N <= 2^{10}.
    pub fn build(d: usize, l_max: u32, smoothness: u32) -> Result<Self> {
        if l_max < 4 {
            return Err(Error::Degenerate(format!(
                "L_max = {l_max} must be at least 4"
            )));
        }
        if d == 0 {
            return Err(Error::Degenerate("dimension must be positive".into()));
        }
        let partition = Partition::new(smoothness)?;
        let residual = partition_residual(&partition, d, 100, 0x5eed);
        if residual > 1e-10 {
            return Err(Error::PartitionResidual(residual));
        }
        let mut k = LocalizedHeatKernel {
            d,
            partition,
            l_max,
            k0_mass: 0.0,
            tilde_table: OnceLock::new(),
        };
        k.k0_mass = k.k0_integral()?;
        Ok(k)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn l_max(&self) -> u32 {
        self.l_max
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// K0(s, x) = φ(s, x) p_s(x) 1_{s > 0}.
    pub fn k0(&self, s: f64, x: &[f64]) -> f64 {
        self.term(0, s, x)
    }

    /// 2^{ℓd} K0(4^ℓ s, 2^ℓ x) = φ(4^ℓ s, 2^ℓ x) p_s(x).
    pub fn term(&self, l: i32, s: f64, x: &[f64]) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let n = 2f64.powi(l) * parabolic_norm(s, x);
        let phi = self.partition.phi_of_norm(n);
        if phi == 0.0 {
            return 0.0;
        }
        let r2: f64 = x.iter().map(|v| v * v).sum();
        phi * heat_radial(self.d, s, r2)
    }

    /// K(s, x) = Σ_{ℓ=0}^{L_max} term_ℓ.
    pub fn eval_k(&self, s: f64, x: &[f64]) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        (0..=self.l_max as i32).map(|l| self.term(l, s, x)).sum()
    }

    /// (1 - θ(N(s, x))) p_s(x) for 0 < s <= 1, zero otherwise: the smooth
    /// piece of the truncated heat kernel that K leaves out, so that
    /// FK = F[1_{0<s<=1} p] - F[this].
    pub fn smooth_remainder(&self, s: f64, x: &[f64]) -> f64 {
        if s <= 0.0 || s > 1.0 {
            return 0.0;
        }
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let c = self.partition.theta_complement(norm_radial(s, r2.sqrt()));
        if c == 0.0 {
            0.0
        } else {
            c * heat_radial(self.d, s, r2)
        }
    }

    /// R(s, x) = Σ_{ℓ=1}^{L_max} term_{-ℓ}.
    pub fn eval_r(&self, s: f64, x: &[f64]) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        (1..=self.l_max as i32).map(|l| self.term(-l, s, x)).sum()
    }

    /// ∫∫ K0, equal to |FK0(0, 0)|.
    pub fn k0_mass(&self) -> f64 {
        self.k0_mass
    }

    fn k0_integral(&self) -> Result<f64> {
        // ∫ dx φ p_s over s ∈ (0, 1]
        let tol = Tolerance::new(1e-14, 1e-11);
        let d = self.d;
        let part = self.partition;
        let inner = |s: f64| {
            let hi = (138.0 * s).sqrt().min(1.0);
            if hi <= 0.0 {
                return 0.0;
            }
            let f = |r: f64| {
                let phi = part.phi_of_norm(norm_radial(s, r));
                phi * heat_radial(d, s, r * r) * radial_measure(d, r)
            };
            adaptive(f, 0.0, hi, tol).value
        };
        Ok(adaptive(inner, 0.0, 1.0, tol).require()?.value)
    }

    fn radial_support(&self, s: f64) -> Option<(f64, f64)> {
        // 1-θ(N) vanishes for N <= 1/2
        let r0 = (1.0 / 16.0 - s * s).max(0.0).powf(0.25);
        if r0 * r0 / (2.0 * s) > 45.0 {
            return None;
        }
        let hi = (80.0 * s).sqrt().max(r0 + 1e-12);
        Some((r0, hi))
    }

    /// h_R(s, ρ) = radial Fourier transform of (1 - θ(N(s, ·))) p_s at |ξ| = ρ.
    fn h_r(&self, s: f64, rho: f64, tol: Tolerance) -> f64 {
        let Some((r0, hi)) = self.radial_support(s) else {
            return 0.0;
        };
        let d = self.d;
        let part = self.partition;
        let f = |r: f64| {
            let c = part.theta_complement(norm_radial(s, r));
            c * heat_radial(d, s, r * r) * radial_kernel(d, rho, r)
        };
        let panels = 1 + (rho * (hi - r0) / PI).ceil() as usize;
        adaptive_panels(f, r0, hi, panels, tol).value
    }

    fn check_d(&self, xi: &[f64]) -> Result<f64> {
        if xi.len() != self.d {
            return Err(Error::Degenerate(format!(
                "ξ has {} components, kernel d = {}",
                xi.len(),
                self.d
            )));
        }
        if self.d > 3 {
            return Err(Error::Unsupported(
                "Fourier transforms of K are implemented for d <= 3".into(),
            ));
        }
        Ok(xi.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// A(λ, ρ) = ∫_0^1 e^{-iλs} h_R(s, ρ) ds.
    fn a_term(&self, lambda: f64, rho: f64) -> QuadratureResult<Complex64> {
        let tol = Tolerance::new(1e-15, 1e-11);
        let inner_tol = Tolerance::new(1e-16, 1e-12);
        let f = |s: f64| Complex64::from_polar(1.0, -lambda * s) * self.h_r(s, rho, inner_tol);
        let panels = 4 + (lambda.abs() / PI).ceil() as usize;
        adaptive_panels(f, 1e-4, 1.0, panels, tol)
    }

    /// FK(λ, ξ) of the untruncated series, (1 - e^{-z})/z - A with
    /// z = |ξ|²/2 + iλ.
    pub fn fourier_k(&self, lambda: f64, xi: &[f64]) -> Result<Complex64> {
        let rho = self.check_d(xi)?;
        let a = self.a_term(lambda, rho).require()?.value;
        Ok(one_minus_exp_over(Complex64::new(0.5 * rho * rho, lambda)) - a)
    }

    /// FR(λ, ξ) = A + e^{-z}/z.
    pub fn fourier_r(&self, lambda: f64, xi: &[f64]) -> Result<Complex64> {
        let rho = self.check_d(xi)?;
        let z = Complex64::new(0.5 * rho * rho, lambda);
        if z.norm() == 0.0 {
            return Err(Error::OriginSingularity);
        }
        let a = self.a_term(lambda, rho).require()?.value;
        Ok(a + (-z).exp() / z)
    }

    pub fn fourier(&self, part: Part, lambda: f64, xi: &[f64]) -> Result<Complex64> {
        match part {
            Part::K => self.fourier_k(lambda, xi),
            Part::R => self.fourier_r(lambda, xi),
        }
    }

    /// FK0(λ, ξ) by direct quadrature over the compact support of K0.
    pub fn fourier_k0(&self, lambda: f64, xi: &[f64]) -> Result<Complex64> {
        let rho = self.check_d(xi)?;
        let d = self.d;
        let part = self.partition;
        let tol = Tolerance::new(1e-16, 1e-12);
        let h = |s: f64| {
            let hi = (138.0 * s).sqrt().min(1.0);
            let lo = (1.0 / 256.0 - s * s).max(0.0).powf(0.25);
            if hi <= lo {
                return 0.0;
            }
            let f = |r: f64| {
                part.phi_of_norm(norm_radial(s, r))
                    * heat_radial(d, s, r * r)
                    * radial_kernel(d, rho, r)
            };
            let panels = 1 + (rho * (hi - lo) / PI).ceil() as usize;
            adaptive_panels(f, lo, hi, panels, tol).value
        };
        let g = |s: f64| Complex64::from_polar(1.0, -lambda * s) * h(s);
        let panels = 4 + (lambda.abs() / PI).ceil() as usize;
        Ok(
            adaptive_panels(g, 0.0, 1.0, panels, Tolerance::new(1e-16, 1e-11))
                .require()?
                .value,
        )
    }

    /// Σ_{ℓ=0}^{L} 4^{-ℓ} FK0(4^{-ℓ}λ, 2^{-ℓ}ξ) with the tail bound
    /// Σ_{ℓ>L} 4^{-ℓ} ∫K0. Fails if the bound exceeds `requested`.
    pub fn fourier_k_series(&self, lambda: f64, xi: &[f64], requested: f64) -> Result<SeriesValue> {
        self.check_d(xi)?;
        let l = self.l_max as i32;
        let tail_bound = 4f64.powi(-(l + 1)) / 0.75 * self.k0_mass;
        if tail_bound > requested {
            return Err(Error::TailBound {
                bound: tail_bound,
                requested,
            });
        }
        let mut value = Complex64::new(0.0, 0.0);
        for k in 0..=l {
            let a = 2f64.powi(-k);
            let xs: Vec<f64> = xi.iter().map(|v| a * v).collect();
            value += self.fourier_k0(a * a * lambda, &xs)? * (a * a);
        }
        Ok(SeriesValue {
            value,
            tail_bound,
            terms: (l + 1) as usize,
        })
    }

    /// K̃(x) = Σ_ℓ ∫ term_ℓ(s, x) ds, per-term quadrature.
    pub fn tilde_k(&self, x: &[f64]) -> Result<f64> {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r == 0.0 {
            return Err(Error::SingularArgument("K̃ is singular at x = 0".into()));
        }
        let tol = Tolerance::new(1e-300, 1e-12);
        let mut total = QuadratureResult::exact(0.0);
        for l in 0..=self.l_max as i32 {
            let scale = 2f64.powi(l);
            if scale * r > 1.0 {
                break;
            }
            let hi = 4f64.powi(-l);
            let f = |s: f64| self.term(l, s, x);
            total = total.combine(adaptive(f, 0.0, hi, tol));
        }
        Ok(total.require()?.value)
    }

    fn tilde_table(&self) -> Result<&TildeTable> {
        if self.d > 3 {
            return Err(Error::Unsupported("FK̃ is implemented for d <= 3".into()));
        }
        if let Some(t) = self.tilde_table.get() {
            return Ok(t);
        }
        let t = self.build_tilde_table()?;
        Ok(self.tilde_table.get_or_init(|| t))
    }

    fn build_tilde_table(&self) -> Result<TildeTable> {
        let d = self.d;
        let part = self.partition;
        // G(ρ) on ρ ∈ [0, 9]; p_s(ρ) with s <= 1 is below e^{-40} beyond
        let rho_max = 9.0;
        let (rho, wr) = composite_gl(0.0, rho_max, 900, 10);
        let tol = Tolerance::new(1e-300, 1e-12);
        let g: Vec<f64> = crate::par::map_slice(&rho, |&p| {
            let lo = (1.0 / 16.0 - p.powi(4)).max(0.0).sqrt();
            let f = |s: f64| part.theta_complement(norm_radial(s, p)) * heat_radial(d, s, p * p);
            adaptive(f, lo.max(1e-6), 1.0, tol).value
        });
        let (r, w) = composite_gl(0.0, TILDE_R_MAX, 512, 8);
        let a0: Vec<f64> = crate::par::map_slice(&r, |&k| {
            rho.iter()
                .zip(&wr)
                .zip(&g)
                .map(|((&p, &wp), &gp)| wp * gp * radial_kernel(d, k, p))
                .sum::<f64>()
        });
        let g = g.iter().zip(&wr).map(|(a, b)| a * b).collect();
        Ok(TildeTable { rho, g, r, w, a0 })
    }

    /// FK̃(|ξ|) = FK(0, ξ) on the table range; beyond it only the heat
    /// part 2(1 - e^{-r²/2})/r² is kept.
    pub fn fourier_tilde_k(&self, r: f64) -> Result<f64> {
        let heat = if r < 1e-6 {
            1.0 - r * r / 4.0
        } else {
            2.0 * (1.0 - (-0.5 * r * r).exp()) / (r * r)
        };
        if r > TILDE_R_MAX {
            return Ok(heat);
        }
        let a0 = self.a_term(0.0, r).require()?.value.re;
        Ok(heat - a0)
    }

    /// FK̃ at many radii through the stored ρ rule; much cheaper than
    /// [`Self::fourier_tilde_k`] pointwise when the list is long.
    pub fn fourier_tilde_k_many(&self, radii: &[f64]) -> Result<Vec<f64>> {
        let t = self.tilde_table()?;
        let d = self.d;
        Ok(crate::par::map_slice(radii, |&r| {
            let heat = if r < 1e-6 {
                1.0 - r * r / 4.0
            } else {
                2.0 * (1.0 - (-0.5 * r * r).exp()) / (r * r)
            };
            let a0: f64 = t
                .rho
                .iter()
                .zip(&t.g)
                .map(|(&p, &g)| g * radial_kernel(d, r, p))
                .sum();
            heat - a0
        }))
    }

    /// Σ_k w_k f(r_k) A0(r_k): the remainder part of ∫ f(r) FK̃(r) dr.
    pub(crate) fn tilde_remainder_integral<F: Fn(f64) -> f64>(&self, f: F) -> Result<(f64, f64)> {
        let t = self.tilde_table()?;
        let v =
            t.r.iter()
                .zip(&t.w)
                .zip(&t.a0)
                .map(|((&r, &w), &a)| w * f(r) * a)
                .sum();
        let edge = t.a0.last().copied().unwrap_or(0.0).abs();
        Ok((v, edge))
    }

    pub fn tilde_table_range(&self) -> f64 {
        TILDE_R_MAX
    }

    /// FK on a tensor lattice of frequencies: rows follow `lambdas`, columns
    /// follow `radii` (values of |ξ|).
    pub fn fourier_table(
        &self,
        part: Part,
        lambdas: &[f64],
        radii: &[f64],
    ) -> Result<FourierTable> {
        if self.d > 3 {
            return Err(Error::Unsupported(
                "Fourier tables are implemented for d <= 3".into(),
            ));
        }
        let lmax = lambdas.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let rmax = radii.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let s_lo = 1.5e-4;
        let s_panels = 16 + (lmax * (1.0 - s_lo) / PI).ceil() as usize;
        let (s_nodes, s_w) = composite_gl(s_lo, 1.0, s_panels, 12);
        let d = self.d;
        let part_fn = self.partition;
        // h_R(s_j, ρ_k), one row per s node
        let h: Vec<Vec<f64>> = crate::par::map_slice(&s_nodes, |&s| {
            let Some((r0, hi)) = self.radial_support(s) else {
                return vec![0.0; radii.len()];
            };
            let panels = 4 + (1.5 * rmax * (hi - r0) / PI).ceil() as usize;
            let (rn, rw) = composite_gl(r0, hi, panels, 12);
            let g: Vec<f64> = rn
                .iter()
                .zip(&rw)
                .map(|(&r, &w)| {
                    w * part_fn.theta_complement(norm_radial(s, r)) * heat_radial(d, s, r * r)
                })
                .collect();
            radii
                .iter()
                .map(|&k| {
                    rn.iter()
                        .zip(&g)
                        .map(|(&r, &gw)| gw * radial_kernel(d, k, r))
                        .sum()
                })
                .collect()
        });
        let values: Vec<Vec<Complex64>> = crate::par::map_slice(lambdas, |&l| {
            let ph: Vec<Complex64> = s_nodes
                .iter()
                .zip(&s_w)
                .map(|(&s, &w)| Complex64::from_polar(w, -l * s))
                .collect();
            radii
                .iter()
                .enumerate()
                .map(|(k, &rho)| {
                    let a: Complex64 = ph.iter().zip(&h).map(|(p, row)| p * row[k]).sum();
                    let z = Complex64::new(0.5 * rho * rho, l);
                    match part {
                        Part::K => one_minus_exp_over(z) - a,
                        Part::R => {
                            if z.norm() == 0.0 {
                                Complex64::new(f64::NAN, 0.0)
                            } else {
                                a + (-z).exp() / z
                            }
                        }
                    }
                })
                .collect()
        });
        Ok(FourierTable {
            lambdas: lambdas.to_vec(),
            radii: radii.to_vec(),
            values: values.concat(),
        })
    }
}

/// (1 - e^{-z})/z with the removable singularity at 0.
pub(crate) fn one_minus_exp_over(z: Complex64) -> Complex64 {
    if z.norm() < 1e-4 {
        Complex64::new(1.0, 0.0) - z * 0.5 + z * z / 6.0 - z * z * z / 24.0
    } else {
        (Complex64::new(1.0, 0.0) - (-z).exp()) / z
    }
}

/// Surface measure factor so that ∫_{R^d} f(|x|) dx = ∫ f(r) radial_measure(r) dr.
fn radial_measure(d: usize, r: f64) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI * r,
        3 => 4.0 * PI * r * r,
        _ => {
            let df = d as f64;
            2.0 * PI.powf(0.5 * df) / crate::special::gamma(0.5 * df) * r.powi(d as i32 - 1)
        }
    }
}

/// Kernel of the radial Fourier transform, including the surface measure.
fn radial_kernel(d: usize, rho: f64, r: f64) -> f64 {
    match d {
        1 => 2.0 * (rho * r).cos(),
        2 => 2.0 * PI * r * bessel_j0(rho * r),
        3 => 4.0 * PI * r * r * sinc(rho * r),
        _ => f64::NAN,
    }
}

/// Max |Σ_ℓ φ(4^ℓ s, 2^ℓ x) - 1| over `count` seeded points with
/// 2^{-10} <= N <= 2^{10}.
pub fn partition_residual(p: &Partition, d: usize, count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let target = 2f64.powf(rng.random_range(-10.0..10.0));
        let mut dir: Vec<f64> = (0..=d).map(|_| rng.random_range(-1.0..1.0)).collect();
        // normalize to N = target with parabolic scaling
        let n0 = parabolic_norm(dir[0], &dir[1..]);
        if n0 == 0.0 {
            continue;
        }
        let k = target / n0;
        dir[0] *= k * k;
        for v in dir.iter_mut().skip(1) {
            *v *= k;
        }
        let n = parabolic_norm(dir[0], &dir[1..]);
        let sum: f64 = (-24..=24).map(|l| p.phi_of_norm(2f64.powi(l) * n)).sum();
        worst = worst.max((sum - 1.0).abs());
    }
    worst
}

/// FK or FR sampled on a (λ, |ξ|) tensor grid.
#[derive(Debug, Clone)]
pub struct FourierTable {
    pub lambdas: Vec<f64>,
    pub radii: Vec<f64>,
    /// Row-major, λ index first.
    pub values: Vec<Complex64>,
}

impl FourierTable {
    pub fn get(&self, i_lambda: usize, i_radius: usize) -> Complex64 {
        self.values[i_lambda * self.radii.len() + i_radius]
    }
}

/// Which coordinate a decay ray moves along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RayAxis {
    Time,
    Space(usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayCheck {
    pub part: Part,
    pub exponents: Vec<f64>,
    pub axis: RayAxis,
    pub slope: f64,
    /// Required: slope <= bound + tolerance.
    pub bound: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub passes: bool,
}

/// Fits log|F| against log t along a ray where one coordinate runs over
/// `ts` and the others are held at `base`. The bound is -a0 on the time ray
/// and -2a_i on the ξ_i ray. Samples below `floor` in magnitude are
/// dropped (decay faster than any power counts as passing).
pub fn decay_check(
    kernel: &LocalizedHeatKernel,
    part: Part,
    exponents: &[f64],
    axis: RayAxis,
    base: &[f64],
    ts: &[f64],
    tolerance: f64,
) -> Result<DecayCheck> {
    if exponents.len() != kernel.d + 1 || base.len() != kernel.d + 1 {
        return Err(Error::Degenerate(
            "exponent tuple and base point need d+1 entries".into(),
        ));
    }
    let floor = 1e-13;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &t in ts {
        let mut p = base.to_vec();
        match axis {
            RayAxis::Time => p[0] = t,
            RayAxis::Space(i) => p[1 + i] = t,
        }
        let v = kernel.fourier(part, p[0], &p[1..])?.norm();
        if v > floor {
            xs.push(t.ln());
            ys.push(v.ln());
        }
    }
    let bound = match axis {
        RayAxis::Time => -exponents[0],
        RayAxis::Space(i) => -2.0 * exponents[1 + i],
    };
    let slope = if xs.len() >= 3 {
        slope_fit(&xs, &ys)?.slope
    } else {
        f64::NEG_INFINITY
    };
    Ok(DecayCheck {
        part,
        exponents: exponents.to_vec(),
        axis,
        slope,
        bound,
        tolerance,
        samples: xs.len(),
        passes: slope <= bound + tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heat_kernel_values() {
        assert!((heat_kernel(1.0, &[0.0]).unwrap() - (2.0 * PI).powf(-0.5)).abs() < 1e-15);
        assert!(matches!(
            heat_kernel(0.0, &[1.0]),
            Err(Error::NonpositiveTime(_))
        ));
        let v = heat_fourier(1.0, &[0.0]).unwrap();
        assert!((v - Complex64::new(0.0, -1.0)).norm() < 1e-15);
        let v = heat_fourier(0.0, &[1.0, 1.0]).unwrap();
        assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(heat_fourier(0.0, &[0.0]).is_err());
    }

    #[test]
    fn theta_is_a_cutoff() {
        let p = Partition::new(1).unwrap();
        assert_eq!(p.theta(0.3), 1.0);
        assert_eq!(p.theta(1.2), 0.0);
        for i in 0..50 {
            let r = 0.5 + 0.01 * i as f64;
            assert!((p.theta(r) + p.theta_complement(r) - 1.0).abs() < 1e-15);
        }
        assert!((p.theta(0.75) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn partition_of_unity() {
        for q in 1..=2 {
            let p = Partition::new(q).unwrap();
            assert!(partition_residual(&p, 2, 100, 7) < 1e-12);
        }
    }

    #[test]
    fn k_vanishes_for_negative_time() {
        let k = LocalizedHeatKernel::build(1, 8, 1).unwrap();
        assert_eq!(k.eval_k(-0.3, &[0.1]), 0.0);
        assert_eq!(k.eval_r(-0.3, &[0.1]), 0.0);
    }

    #[test]
    fn k_plus_r_is_heat_kernel() {
        let k = LocalizedHeatKernel::build(2, 24, 2).unwrap();
        for &(s, x, y) in &[(0.01, 0.05, -0.02), (0.7, 0.4, 0.9), (3.0, -1.0, 2.0)] {
            let p = heat_kernel(s, &[x, y]).unwrap();
            let sum = k.eval_k(s, &[x, y]) + k.eval_r(s, &[x, y]);
            assert!((sum - p).abs() < 1e-12 * p.max(1.0));
        }
    }

    #[test]
    fn fourier_parts_add_to_heat() {
        let k = LocalizedHeatKernel::build(1, 24, 1).unwrap();
        for &(l, x) in &[(0.3, 0.7), (5.0, 0.0), (0.0, 2.0), (-12.0, 3.0)] {
            let sum = k.fourier_k(l, &[x]).unwrap() + k.fourier_r(l, &[x]).unwrap();
            let p = heat_fourier(l, &[x]).unwrap();
            assert!((sum - p).norm() < 1e-10, "{l} {x}");
        }
    }

    #[test]
    fn table_matches_pointwise() {
        let k = LocalizedHeatKernel::build(1, 24, 1).unwrap();
        let ls = [-9.0, 0.0, 2.5, 20.0];
        let rs = [0.0, 1.3, 6.0];
        let t = k.fourier_table(Part::K, &ls, &rs).unwrap();
        for (i, &l) in ls.iter().enumerate() {
            for (j, &r) in rs.iter().enumerate() {
                let v = k.fourier_k(l, &[r]).unwrap();
                assert!(
                    (t.get(i, j) - v).norm() < 1e-9,
                    "{l} {r} {} {}",
                    t.get(i, j),
                    v
                );
            }
        }
    }

    #[test]
    fn batched_tilde_matches_pointwise() {
        let k = LocalizedHeatKernel::build(2, 24, 1).unwrap();
        let rs = [0.0, 0.8, 3.0, 11.0];
        let many = k.fourier_tilde_k_many(&rs).unwrap();
        for (r, v) in rs.iter().zip(&many) {
            let p = k.fourier_tilde_k(*r).unwrap();
            assert!((p - v).abs() < 1e-9, "{r}: {p} vs {v}");
        }
    }
}
