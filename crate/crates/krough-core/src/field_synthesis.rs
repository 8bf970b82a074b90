//! Seeded spectral synthesis of the mollified noise on a periodic lattice,
//! its convolution with K (or K̃ in spatial mode), and covariances of both
//! the continuum field and its lattice discretization.
//!
//! Frequencies live on the dual lattice k_p = 2πp/L. Each mode carries the
//! spectral mass μ_p = c² |Fρ_n(k_p)|² ∫_{cell p} N, where the power weight
//! is integrated exactly over the frequency cell so that the singular cells
//! at the coordinate hyperplanes get the right mass. The field is
//!
//!   Ẇ(z) = Re Σ_p c Fρ_n(k_p) √(w_p) (g¹_p + i g²_p) e^{i k_p·z},
//!
//! whose covariance is Σ_p μ_p cos(k_p·(z - z')). The imaginary part of the
//! same sum is an independent copy, so one transform yields two replicas.
//!
//! Gaussians are drawn per frequency row: the row of all modes sharing every
//! index but the last one gets its own ChaCha stream, and inside a row the
//! draws follow p = 0, 1, -1, 2, -2, ... . Two lattices with the same box
//! therefore agree on all common modes, and fields at different levels n built
//! from one seed share their Gaussians.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{signed_index, NdFft};
use crate::kernels::{LocalizedHeatKernel, Part};
use crate::quadrature::{integrate_from_periodic, integrate_singular, Domain, Tolerance};
use crate::special::composite_gl;
use crate::spectral_model::{
    normalization_constants, HurstConfig, Mode, Mollifier, SpectralWeight,
};

/// Relative spectral mass below which a mode is dropped.
const MODE_FLOOR: f64 = 1e-30;

/// Periodic lattice. In space-time mode axis 0 is time; in spatial mode the
/// time axis is absent (nt = 1, dt unused). All spatial axes share nx, dx.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub mode: Mode,
    pub d: usize,
    pub nt: usize,
    pub dt: f64,
    pub nx: usize,
    pub dx: f64,
}

impl Lattice {
    pub fn space_time(d: usize, nt: usize, dt: f64, nx: usize, dx: f64) -> Result<Self> {
        let l = Lattice {
            mode: Mode::SpaceTime,
            d,
            nt,
            dt,
            nx,
            dx,
        };
        l.validate()?;
        Ok(l)
    }

    pub fn spatial(d: usize, nx: usize, dx: f64) -> Result<Self> {
        let l = Lattice {
            mode: Mode::Spatial,
            d,
            nt: 1,
            dt: 0.0,
            nx,
            dx,
        };
        l.validate()?;
        Ok(l)
    }

    /// Lattice whose steps are powers of two with π/h at least six
    /// mollifier bandwidths at level n (4^n in time, 2^n in space), and
    /// whose box is at least the requested lengths.
    pub fn for_level(hurst: &HurstConfig, n: u32, time_len: f64, space_len: f64) -> Result<Self> {
        let step = |band: f64| 2f64.powi(-((6.0 * band / PI).log2().ceil() as i32));
        let count = |len: f64, h: f64| {
            let m = (len / h).ceil() as usize;
            m.max(8).next_power_of_two()
        };
        let dx = step(2f64.powi(n as i32));
        let nx = count(space_len, dx);
        match hurst.mode() {
            Mode::SpaceTime => {
                let dt = step(4f64.powi(n as i32));
                Lattice::space_time(hurst.d(), count(time_len, dt), dt, nx, dx)
            }
            Mode::Spatial => Lattice::spatial(hurst.d(), nx, dx),
        }
    }

    /// Rejects odd sizes, tiny grids and non-positive steps.
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::MalformedGrid(
                "lattice dimension must be positive".into(),
            ));
        }
        if self.nx < 4 || self.nx % 2 != 0 || !(self.dx > 0.0) {
            return Err(Error::MalformedGrid(format!(
                "space axis nx = {}, dx = {}",
                self.nx, self.dx
            )));
        }
        if self.mode == Mode::SpaceTime && (self.nt < 4 || self.nt % 2 != 0 || !(self.dt > 0.0)) {
            return Err(Error::MalformedGrid(format!(
                "time axis nt = {}, dt = {}",
                self.nt, self.dt
            )));
        }
        if self.d > 3 {
            return Err(Error::Unsupported(
                "lattices are implemented for d <= 3".into(),
            ));
        }
        Ok(())
    }

    pub fn axes(&self) -> usize {
        match self.mode {
            Mode::SpaceTime => self.d + 1,
            Mode::Spatial => self.d,
        }
    }

    pub fn has_time(&self) -> bool {
        self.mode == Mode::SpaceTime
    }

    pub fn dims(&self) -> Vec<usize> {
        (0..self.axes()).map(|a| self.size(a)).collect()
    }

    pub fn size(&self, axis: usize) -> usize {
        if self.has_time() && axis == 0 {
            self.nt
        } else {
            self.nx
        }
    }

    pub fn step(&self, axis: usize) -> f64 {
        if self.has_time() && axis == 0 {
            self.dt
        } else {
            self.dx
        }
    }

    pub fn steps(&self) -> Vec<f64> {
        (0..self.axes()).map(|a| self.step(a)).collect()
    }

    /// Box length along an axis.
    pub fn period(&self, axis: usize) -> f64 {
        self.size(axis) as f64 * self.step(axis)
    }

    pub fn len(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume of one lattice cell, the trapezoid weight of every node.
    pub fn cell_volume(&self) -> f64 {
        self.steps().iter().product()
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        let mut k = 0;
        for (a, &m) in multi.iter().enumerate() {
            k = k * self.size(a) + m;
        }
        k
    }

    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let dims = self.dims();
        let mut v = vec![0; dims.len()];
        for a in (0..dims.len()).rev() {
            v[a] = flat % dims[a];
            flat /= dims[a];
        }
        v
    }

    /// Physical coordinates of a node, time first in space-time mode.
    pub fn coords(&self, multi: &[usize]) -> Vec<f64> {
        multi
            .iter()
            .enumerate()
            .map(|(a, &m)| m as f64 * self.step(a))
            .collect()
    }

    /// Angular frequency of FFT bin k along an axis.
    pub fn frequency(&self, axis: usize, k: usize) -> f64 {
        2.0 * PI * signed_index(k, self.size(axis)) as f64 / self.period(axis)
    }

    /// Frequency spacing 2π/L per axis.
    pub fn frequency_spacing(&self) -> Vec<f64> {
        (0..self.axes())
            .map(|a| 2.0 * PI / self.period(a))
            .collect()
    }

    /// Frequency vector of a flat FFT index, split as (λ, ξ).
    pub fn wavevector(&self, flat: usize) -> (f64, Vec<f64>) {
        let m = self.unravel(flat);
        let f: Vec<f64> = m
            .iter()
            .enumerate()
            .map(|(a, &k)| self.frequency(a, k))
            .collect();
        if self.has_time() {
            (f[0], f[1..].to_vec())
        } else {
            (0.0, f)
        }
    }

    fn is_nyquist(&self, flat: usize) -> bool {
        let m = self.unravel(flat);
        m.iter().enumerate().any(|(a, &k)| k == self.size(a) / 2)
    }
}

/// ∫_lo^hi |u|^a du.
fn cell_power(a: f64, lo: f64, hi: f64) -> f64 {
    let prim = |u: f64| u.signum() * u.abs().powf(a + 1.0) / (a + 1.0);
    prim(hi) - prim(lo)
}

/// Truncation report shipped with every field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    /// Frequency spacing per axis.
    pub spacing: Vec<f64>,
    /// Largest retained |frequency| per axis (one bin below Nyquist).
    pub radius: Vec<f64>,
    /// Largest |Fρ_n|² on the outermost retained shell.
    pub bandwidth_leak: f64,
    pub active_modes: usize,
}

impl Truncation {
    fn empty(l: &Lattice) -> Self {
        let sp = l.frequency_spacing();
        let radius = (0..l.axes())
            .map(|a| sp[a] * (l.size(a) / 2 - 1) as f64)
            .collect();
        Truncation {
            spacing: sp,
            radius,
            bandwidth_leak: 0.0,
            active_modes: 0,
        }
    }
}

/// Which part of the complex synthesis a field came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Component {
    Real,
    Imaginary,
}

/// A realization of Ẇⁿ on the lattice, with K∗Ẇⁿ cached when a kernel was
/// attached to the generating model.
#[derive(Debug, Clone)]
pub struct LatticeField {
    pub lattice: Lattice,
    pub level: u32,
    pub seed: u64,
    pub component: Component,
    pub samples: Vec<f64>,
    pub kfield: Option<Vec<f64>>,
    pub truncation: Truncation,
}

impl LatticeField {
    /// Wraps deterministic samples, e.g. a constant field for checks.
    pub fn from_samples(lattice: Lattice, samples: Vec<f64>) -> Result<Self> {
        lattice.validate()?;
        if samples.len() != lattice.len() {
            return Err(Error::MalformedGrid(format!(
                "{} samples for {} nodes",
                samples.len(),
                lattice.len()
            )));
        }
        let truncation = Truncation::empty(&lattice);
        Ok(LatticeField {
            lattice,
            level: 0,
            seed: 0,
            component: Component::Real,
            samples,
            kfield: None,
            truncation,
        })
    }

    pub fn at(&self, multi: &[usize]) -> f64 {
        self.samples[self.lattice.index(multi)]
    }

    /// Time slice at index i (the whole field in spatial mode).
    pub fn slice(&self, i: usize) -> &[f64] {
        if self.lattice.has_time() {
            let m = self.lattice.len() / self.lattice.nt;
            &self.samples[i * m..(i + 1) * m]
        } else {
            &self.samples
        }
    }

    /// Pointwise difference of two fields on one lattice (kfield included
    /// when both carry it).
    pub fn difference(&self, other: &LatticeField) -> Result<LatticeField> {
        if self.lattice != other.lattice {
            return Err(Error::MalformedGrid(
                "fields live on different lattices".into(),
            ));
        }
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a - b)
            .collect();
        let kfield = match (&self.kfield, &other.kfield) {
            (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(x, y)| x - y).collect()),
            _ => None,
        };
        Ok(LatticeField {
            samples,
            kfield,
            ..self.clone()
        })
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }
}

/// splitmix64 finalizer, used to derive replica seeds.
pub fn mix_seed(seed: u64, replica: u64) -> u64 {
    let mut z = seed
        ^ replica
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(0x632b_e59b_d9b4_e019);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn zigzag(p: i64) -> u64 {
    ((p << 1) ^ (p >> 63)) as u64
}

/// Position of p in the order 0, 1, -1, 2, -2, ...
fn canonical_position(p: i64) -> usize {
    if p > 0 {
        (2 * p - 1) as usize
    } else {
        (-2 * p) as usize
    }
}

fn canonical_value(j: usize) -> i64 {
    if j % 2 == 1 {
        (j as i64 + 1) / 2
    } else {
        -(j as i64) / 2
    }
}

fn normal_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let scale = 1.0 / (1u64 << 53) as f64;
    let u1 = ((rng.next_u64() >> 11) as f64 + 0.5) * scale;
    let u2 = (rng.next_u64() >> 11) as f64 * scale;
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (2.0 * PI * u2).sin_cos();
    (r * c, r * s)
}

/// Fourier multiplier of K (space-time) or K̃ (spatial) at every lattice
/// frequency. Inactive modes get zero.
#[derive(Debug, Clone)]
pub struct KernelMultiplier {
    lattice: Lattice,
    values: Vec<Complex64>,
}

impl KernelMultiplier {
    pub fn new(
        kernel: &LocalizedHeatKernel,
        lattice: &Lattice,
        active: Option<&[bool]>,
    ) -> Result<Self> {
        if kernel.d() != lattice.d {
            return Err(Error::Degenerate(format!(
                "kernel d = {} vs lattice d = {}",
                kernel.d(),
                lattice.d
            )));
        }
        let n = lattice.len();
        let is_active = |k: usize| active.map(|a| a[k]).unwrap_or(true);
        let s0 = usize::from(lattice.has_time());
        // distinct |p_t| and squared integer radii
        let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
        let mut rads: BTreeMap<i64, usize> = BTreeMap::new();
        let mut keys = Vec::with_capacity(n);
        for k in 0..n {
            if !is_active(k) {
                keys.push(None);
                continue;
            }
            let m = lattice.unravel(k);
            let pt = if lattice.has_time() {
                signed_index(m[0], lattice.nt)
            } else {
                0
            };
            let r2: i64 = m[s0..]
                .iter()
                .map(|&j| signed_index(j, lattice.nx).pow(2))
                .sum();
            rows.insert(pt.unsigned_abs() as usize, 0);
            rads.insert(r2, 0);
            keys.push(Some((pt, r2)));
        }
        for (i, v) in rows.values_mut().enumerate() {
            *v = i;
        }
        for (i, v) in rads.values_mut().enumerate() {
            *v = i;
        }
        let dk = 2.0 * PI / lattice.period(s0);
        let radii: Vec<f64> = rads.keys().map(|&r2| dk * (r2 as f64).sqrt()).collect();
        let table: Vec<Complex64> = if lattice.has_time() {
            let dl = 2.0 * PI / lattice.period(0);
            let lambdas: Vec<f64> = rows.keys().map(|&p| dl * p as f64).collect();
            if lambdas.is_empty() {
                Vec::new()
            } else {
                kernel.fourier_table(Part::K, &lambdas, &radii)?.values
            }
        } else {
            kernel
                .fourier_tilde_k_many(&radii)?
                .into_iter()
                .map(|v| Complex64::new(v, 0.0))
                .collect()
        };
        let nr = radii.len();
        let values = keys
            .iter()
            .map(|key| match key {
                None => Complex64::new(0.0, 0.0),
                Some((pt, r2)) => {
                    let v = table[rows[&(pt.unsigned_abs() as usize)] * nr + rads[r2]];
                    if *pt < 0 {
                        v.conj()
                    } else {
                        v
                    }
                }
            })
            .collect();
        Ok(KernelMultiplier {
            lattice: lattice.clone(),
            values,
        })
    }

    /// FK at the lattice frequencies from the closed form of the truncated
    /// heat kernel minus the FFT of the sampled smooth remainder (trapezoid
    /// in s with half weight at s = 1, periodized in space). Much cheaper
    /// than [`Self::new`] on fine lattices; the error is the trapezoid error
    /// of a smooth integrand plus aliasing beyond the lattice bandwidth.
    pub fn sampled(kernel: &LocalizedHeatKernel, lattice: &Lattice) -> Result<Self> {
        if !lattice.has_time() {
            return Self::new(kernel, lattice, None);
        }
        if kernel.d() != lattice.d {
            return Err(Error::Degenerate(format!(
                "kernel d = {} vs lattice d = {}",
                kernel.d(),
                lattice.d
            )));
        }
        let steps = (1.0 / lattice.dt).round();
        if (steps * lattice.dt - 1.0).abs() > 1e-9 || steps < 4.0 {
            return Err(Error::MalformedGrid(format!(
                "1/dt = {} must be an integer >= 4",
                1.0 / lattice.dt
            )));
        }
        let steps = steps as usize;
        let d = lattice.d;
        let nx = lattice.nx;
        let m = nx.pow(d as u32);
        let cell = lattice.cell_volume();
        let dims = lattice.dims();
        let mut buf = vec![Complex64::new(0.0, 0.0); lattice.len()];
        let nt = lattice.nt;
        crate::par::for_each_chunk_mut(&mut buf, m, |row, out| {
            let mut j = if row == 0 { nt } else { row };
            while j <= steps {
                let s = j as f64 * lattice.dt;
                let w = if j == steps { 0.5 } else { 1.0 };
                let reach = (80.0 * s).sqrt();
                let imax = (reach / lattice.dx).floor() as i64;
                let span = (2 * imax + 1) as usize;
                let mut idx = vec![0usize; d];
                let mut x = vec![0.0; d];
                for _ in 0..span.pow(d as u32) {
                    let mut flat = 0usize;
                    for a in 0..d {
                        let off = idx[a] as i64 - imax;
                        x[a] = off as f64 * lattice.dx;
                        flat = flat * nx + off.rem_euclid(nx as i64) as usize;
                    }
                    let v = kernel.smooth_remainder(s, &x);
                    if v != 0.0 {
                        out[flat].re += w * cell * v;
                    }
                    for a in (0..d).rev() {
                        idx[a] += 1;
                        if idx[a] < span {
                            break;
                        }
                        idx[a] = 0;
                    }
                }
                j += nt;
            }
        });
        NdFft::new(&dims)?.forward(&mut buf)?;
        // Euler-Maclaurin end correction at the jump s = 1:
        // -dt²/12 e^{-iλ} (∂_s ĝ(1) - iλ ĝ(1)), ĝ the spatial transform
        let slice = |s: f64| -> Vec<Complex64> {
            let reach = (80.0f64).sqrt();
            let imax = ((reach / lattice.dx).floor() as i64).min(nx as i64 / 2 - 1);
            let mut v = vec![Complex64::new(0.0, 0.0); m];
            let span = (2 * imax + 1) as usize;
            let mut idx = vec![0usize; d];
            let mut x = vec![0.0; d];
            let svol = lattice.dx.powi(d as i32);
            for _ in 0..span.pow(d as u32) {
                let mut flat = 0usize;
                for a in 0..d {
                    let off = idx[a] as i64 - imax;
                    x[a] = off as f64 * lattice.dx;
                    flat = flat * nx + off.rem_euclid(nx as i64) as usize;
                }
                v[flat].re += svol * kernel.smooth_remainder(s, &x);
                for a in (0..d).rev() {
                    idx[a] += 1;
                    if idx[a] < span {
                        break;
                    }
                    idx[a] = 0;
                }
            }
            v
        };
        let sfft = NdFft::new(&vec![nx; d])?;
        let dt = lattice.dt;
        let mut g1 = slice(1.0);
        let mut g2 = slice(1.0 - dt);
        let mut g3 = slice(1.0 - 2.0 * dt);
        sfft.forward(&mut g1)?;
        sfft.forward(&mut g2)?;
        sfft.forward(&mut g3)?;
        let dg: Vec<Complex64> = g1
            .iter()
            .zip(&g2)
            .zip(&g3)
            .map(|((a, b), c)| (a * 3.0 - b * 4.0 + c) / (2.0 * dt))
            .collect();
        for (k, v) in buf.iter_mut().enumerate() {
            let (lambda, xi) = lattice.wavevector(k);
            let r2: f64 = xi.iter().map(|u| u * u).sum();
            let sp = k % m;
            let end = Complex64::from_polar(1.0, -lambda)
                * (dg[sp] - Complex64::new(0.0, lambda) * g1[sp]);
            let a = *v - end * (dt * dt / 12.0);
            *v = crate::kernels::one_minus_exp_over(Complex64::new(0.5 * r2, lambda)) - a;
        }
        Ok(KernelMultiplier {
            lattice: lattice.clone(),
            values: buf,
        })
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }
}

/// Discretized spectral measure of Ẇⁿ on a lattice, optionally with the
/// kernel multiplier attached. Sampling, lattice covariances and lag
/// covariances all derive from it.
pub struct SpectralModel {
    lattice: Lattice,
    hurst: HurstConfig,
    level: u32,
    amp: Vec<Complex64>,
    kmult: Option<KernelMultiplier>,
    truncation: Truncation,
    fft: NdFft,
}

impl std::fmt::Debug for SpectralModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralModel")
            .field("lattice", &self.lattice)
            .field("hurst", &self.hurst)
            .field("level", &self.level)
            .field("truncation", &self.truncation)
            .field("kernel", &self.kmult.is_some())
            .finish()
    }
}

/// Options for [`SpectralModel::with_options`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisOptions {
    /// Fail instead of recording when the mollifier is not resolved.
    pub strict: bool,
    /// Largest tolerated |Fρ_n|² on the outermost retained shell.
    pub max_leak: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            strict: false,
            max_leak: 1e-12,
        }
    }
}

impl SpectralModel {
    pub fn new(hurst: &HurstConfig, m: &Mollifier, n: u32, lattice: &Lattice) -> Result<Self> {
        Self::with_options(hurst, m, n, lattice, SynthesisOptions::default())
    }

    pub fn with_options(
        hurst: &HurstConfig,
        m: &Mollifier,
        n: u32,
        lattice: &Lattice,
        opts: SynthesisOptions,
    ) -> Result<Self> {
        lattice.validate()?;
        if hurst.mode() != lattice.mode || hurst.d() != lattice.d || m.d() != lattice.d {
            return Err(Error::Degenerate(
                "Hurst configuration, mollifier and lattice disagree on mode or d".into(),
            ));
        }
        let c = normalization_constants(hurst)?.c_squared().sqrt();
        let exps = hurst.weight_exponents();
        let spacing = lattice.frequency_spacing();
        let dims = lattice.dims();
        // per-axis cell integrals of |u|^a
        let cells: Vec<Vec<f64>> = (0..dims.len())
            .map(|a| {
                (0..dims[a])
                    .map(|k| {
                        let f = lattice.frequency(a, k);
                        cell_power(exps[a], f - 0.5 * spacing[a], f + 0.5 * spacing[a])
                    })
                    .collect()
            })
            .collect();
        let len = lattice.len();
        let scale = 2f64.powi(-(n as i32));
        let mut amp = vec![Complex64::new(0.0, 0.0); len];
        let mut leak = 0.0f64;
        for (k, slot) in amp.iter_mut().enumerate() {
            if lattice.is_nyquist(k) {
                continue;
            }
            let multi = lattice.unravel(k);
            let w: f64 = multi
                .iter()
                .enumerate()
                .map(|(a, &j)| cells[a][j])
                .product();
            let (lambda, xi) = lattice.wavevector(k);
            let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
            let frho = if lattice.has_time() {
                m.time_factor(scale * scale * lambda) * m.space_factor(scale * r)
            } else {
                Complex64::new(m.space_factor(scale * r), 0.0)
            };
            let edge = multi.iter().enumerate().any(|(a, &j)| {
                let s = signed_index(j, dims[a]).unsigned_abs() as usize;
                s + 1 == dims[a] / 2
            });
            if edge {
                leak = leak.max(frho.norm_sqr());
            }
            *slot = frho * (c * w.sqrt());
        }
        let max_mu = amp.iter().fold(0.0f64, |a, v| a.max(v.norm_sqr()));
        let mut active = 0;
        for v in amp.iter_mut() {
            if v.norm_sqr() <= MODE_FLOOR * max_mu {
                *v = Complex64::new(0.0, 0.0);
            } else {
                active += 1;
            }
        }
        if leak > opts.max_leak && opts.strict {
            return Err(Error::Bandwidth(format!(
                "|Fρ_n|² = {leak:e} on the outermost shell at level {n}; refine the lattice"
            )));
        }
        let mut truncation = Truncation::empty(lattice);
        truncation.bandwidth_leak = leak;
        truncation.active_modes = active;
        Ok(SpectralModel {
            lattice: lattice.clone(),
            hurst: hurst.clone(),
            level: n,
            amp,
            kmult: None,
            truncation,
            fft: NdFft::new(&dims)?,
        })
    }

    /// Attaches the multiplier of K (or K̃ in spatial mode) on the active
    /// modes, so that samples carry K∗Ẇⁿ and covariances include V.
    /// Small space-time lattices use the quadrature table, larger ones the
    /// sampled multiplier.
    pub fn with_kernel(mut self, kernel: &LocalizedHeatKernel) -> Result<Self> {
        let l = &self.lattice;
        let table_size = (l.nt / 2 + 1) * (l.d * (l.nx / 2).pow(2) + 1);
        self.kmult = Some(if l.has_time() && table_size > 20_000 {
            KernelMultiplier::sampled(kernel, l)?
        } else {
            let active: Vec<bool> = self.amp.iter().map(|a| a.norm_sqr() > 0.0).collect();
            KernelMultiplier::new(kernel, l, Some(&active))?
        });
        Ok(self)
    }

    /// Reuses a multiplier computed for the same lattice (for instance at
    /// another level).
    pub fn with_multiplier(mut self, mult: KernelMultiplier) -> Result<Self> {
        if mult.lattice != self.lattice {
            return Err(Error::MalformedGrid(
                "multiplier built for another lattice".into(),
            ));
        }
        for (a, v) in self.amp.iter().zip(mult.values()) {
            if a.norm_sqr() > 0.0 && *v == Complex64::new(0.0, 0.0) {
                return Err(Error::Degenerate("multiplier misses an active mode".into()));
            }
        }
        self.kmult = Some(mult);
        Ok(self)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn hurst(&self) -> &HurstConfig {
        &self.hurst
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn truncation(&self) -> &Truncation {
        &self.truncation
    }

    pub fn multiplier(&self) -> Option<&KernelMultiplier> {
        self.kmult.as_ref()
    }

    pub fn active_mask(&self) -> Vec<bool> {
        self.amp.iter().map(|a| a.norm_sqr() > 0.0).collect()
    }

    /// Complex mode amplitudes c Fρ_n(k_p) √(w_p); μ_p = |amp_p|².
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amp
    }

    /// Spectral masses μ_p.
    pub fn masses(&self) -> Vec<f64> {
        self.amp.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Σ_p μ_p, the lattice variance of Ẇⁿ at a node.
    pub fn variance(&self) -> f64 {
        self.amp.iter().map(|a| a.norm_sqr()).sum()
    }

    fn coefficients(&self, seed: u64) -> Vec<Complex64> {
        let l = &self.lattice;
        let dims = l.dims();
        let last = dims.len() - 1;
        let nl = dims[last];
        let base = ChaCha8Rng::seed_from_u64(seed);
        let mut out = vec![Complex64::new(0.0, 0.0); l.len()];
        for (row, chunk) in out.chunks_mut(nl).enumerate() {
            let amps = &self.amp[row * nl..(row + 1) * nl];
            if amps.iter().all(|a| a.norm_sqr() == 0.0) {
                continue;
            }
            let mut key = 0u64;
            let mut rem = row;
            let mut parts = vec![0i64; last];
            for a in (0..last).rev() {
                parts[a] = signed_index(rem % dims[a], dims[a]);
                rem /= dims[a];
            }
            for p in parts {
                key = (key << 21) | (zigzag(p) & 0x1f_ffff);
            }
            let mut rng = base.clone();
            rng.set_stream(key);
            rng.set_word_pos(0);
            // p = 0, 1, -1, ..., up to one below Nyquist
            let count = nl - 1;
            let top = canonical_position(-((nl / 2 - 1) as i64))
                .max(canonical_position((nl / 2 - 1) as i64));
            debug_assert_eq!(top + 1, count);
            for j in 0..count {
                let (g1, g2) = normal_pair(&mut rng);
                let p = canonical_value(j);
                let bin = if p >= 0 {
                    p as usize
                } else {
                    (nl as i64 + p) as usize
                };
                chunk[bin] = amps[bin] * Complex64::new(g1, g2);
            }
        }
        out
    }

    fn synthesize(&self, seed: u64) -> Result<(Vec<Complex64>, Option<Vec<Complex64>>)> {
        let coeff = self.coefficients(seed);
        let v = match &self.kmult {
            Some(k) => {
                let mut y: Vec<Complex64> =
                    coeff.iter().zip(k.values()).map(|(a, b)| a * b).collect();
                self.fft.synthesize(&mut y)?;
                Some(y)
            }
            None => None,
        };
        let mut x = coeff;
        self.fft.synthesize(&mut x)?;
        Ok((x, v))
    }

    fn wrap(
        &self,
        seed: u64,
        component: Component,
        samples: Vec<f64>,
        kfield: Option<Vec<f64>>,
    ) -> LatticeField {
        LatticeField {
            lattice: self.lattice.clone(),
            level: self.level,
            seed,
            component,
            samples,
            kfield,
            truncation: self.truncation.clone(),
        }
    }

    /// One realization (real part of the synthesis).
    pub fn sample(&self, seed: u64) -> Result<LatticeField> {
        let (x, v) = self.synthesize(seed)?;
        let w = x.iter().map(|c| c.re).collect();
        let k = v.map(|v| v.iter().map(|c| c.re).collect());
        Ok(self.wrap(seed, Component::Real, w, k))
    }

    /// Two independent realizations from one synthesis.
    pub fn sample_pair(&self, seed: u64) -> Result<(LatticeField, LatticeField)> {
        let (x, v) = self.synthesize(seed)?;
        let re = x.iter().map(|c| c.re).collect();
        let im = x.iter().map(|c| c.im).collect();
        let (kre, kim) = match v {
            Some(v) => (
                Some(v.iter().map(|c| c.re).collect()),
                Some(v.iter().map(|c| c.im).collect()),
            ),
            None => (None, None),
        };
        Ok((
            self.wrap(seed, Component::Real, re, kre),
            self.wrap(seed, Component::Imaginary, im, kim),
        ))
    }

    /// Exact covariances of the lattice model at every periodic lag.
    pub fn lattice_covariances(&self) -> Result<LatticeCovariances> {
        let mu = self.masses();
        let run = |vals: Vec<Complex64>| -> Result<Vec<f64>> {
            let mut v = vals;
            self.fft.synthesize(&mut v)?;
            Ok(v.iter().map(|c| c.re).collect())
        };
        let cww = run(mu.iter().map(|&m| Complex64::new(m, 0.0)).collect())?;
        let (cvw, cvv) = match &self.kmult {
            Some(k) => (
                Some(run(mu
                    .iter()
                    .zip(k.values())
                    .map(|(&m, f)| f * m)
                    .collect())?),
                Some(run(mu
                    .iter()
                    .zip(k.values())
                    .map(|(&m, f)| Complex64::new(m * f.norm_sqr(), 0.0))
                    .collect())?),
            ),
            None => (None, None),
        };
        Ok(LatticeCovariances {
            lattice: self.lattice.clone(),
            cww,
            cvw,
            cvv,
        })
    }

    /// Model covariances on the tensor lag grid {j h_a : |j| <= half_a},
    /// evaluated by direct spectral sums, so the lags need not be lattice
    /// offsets.
    pub fn lag_covariances(&self, steps: &[f64], half: &[usize]) -> Result<LagTable> {
        let l = &self.lattice;
        let axes = l.axes();
        if steps.len() != axes || half.len() != axes {
            return Err(Error::Degenerate(format!("lag grid needs {axes} axes")));
        }
        let dims = l.dims();
        // active bins per axis
        let mask = self.active_mask();
        let mut used: Vec<Vec<bool>> = dims.iter().map(|&n| vec![false; n]).collect();
        for (k, &on) in mask.iter().enumerate() {
            if on {
                for (a, &j) in l.unravel(k).iter().enumerate() {
                    used[a][j] = true;
                }
            }
        }
        let bins: Vec<Vec<usize>> = used
            .iter()
            .map(|u| (0..u.len()).filter(|&j| u[j]).collect())
            .collect();
        let shape: Vec<usize> = bins.iter().map(|b| b.len()).collect();
        let gather = |vals: &dyn Fn(usize) -> Complex64| -> Vec<Complex64> {
            let total: usize = shape.iter().product();
            let mut out = Vec::with_capacity(total);
            let mut idx = vec![0usize; axes];
            for _ in 0..total {
                let multi: Vec<usize> = idx.iter().enumerate().map(|(a, &i)| bins[a][i]).collect();
                out.push(vals(l.index(&multi)));
                for a in (0..axes).rev() {
                    idx[a] += 1;
                    if idx[a] < shape[a] {
                        break;
                    }
                    idx[a] = 0;
                }
            }
            out
        };
        let mu = self.masses();
        let contract = |mut arr: Vec<Complex64>| -> Vec<f64> {
            let mut cur_shape = shape.clone();
            for a in 0..axes {
                let nlag = 2 * half[a] + 1;
                let freqs: Vec<f64> = bins[a].iter().map(|&j| l.frequency(a, j)).collect();
                let phase: Vec<Complex64> = (0..nlag)
                    .flat_map(|i| {
                        let tau = (i as f64 - half[a] as f64) * steps[a];
                        freqs
                            .iter()
                            .map(move |&f| Complex64::from_polar(1.0, f * tau))
                            .collect::<Vec<_>>()
                    })
                    .collect();
                let outer: usize = cur_shape[..a].iter().product();
                let inner: usize = cur_shape[a + 1..].iter().product();
                let na = cur_shape[a];
                let mut next = vec![Complex64::new(0.0, 0.0); outer * nlag * inner];
                for o in 0..outer {
                    for i in 0..nlag {
                        let ph = &phase[i * na..(i + 1) * na];
                        let dst = &mut next[(o * nlag + i) * inner..(o * nlag + i + 1) * inner];
                        for (j, p) in ph.iter().enumerate() {
                            let src = &arr[(o * na + j) * inner..(o * na + j + 1) * inner];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += p * s;
                            }
                        }
                    }
                }
                arr = next;
                cur_shape[a] = nlag;
            }
            arr.iter().map(|c| c.re).collect()
        };
        let cww = contract(gather(&|k| Complex64::new(mu[k], 0.0)));
        let (cvw, cvv) = match &self.kmult {
            Some(km) => {
                let f = km.values();
                (
                    Some(contract(gather(&|k| f[k] * mu[k]))),
                    Some(contract(gather(&|k| {
                        Complex64::new(mu[k] * f[k].norm_sqr(), 0.0)
                    }))),
                )
            }
            None => (None, None),
        };
        Ok(LagTable {
            steps: steps.to_vec(),
            half: half.to_vec(),
            cww,
            cvw,
            cvv,
        })
    }
}

/// Covariances of the lattice model indexed by periodic lattice offset:
/// cww[τ] = E[Ẇ(z+τ)Ẇ(z)], cvw[τ] = E[V(z+τ)Ẇ(z)], cvv[τ] = E[V(z+τ)V(z)]
/// with V = K∗Ẇ.
#[derive(Debug, Clone)]
pub struct LatticeCovariances {
    pub lattice: Lattice,
    pub cww: Vec<f64>,
    pub cvw: Option<Vec<f64>>,
    pub cvv: Option<Vec<f64>>,
}

impl LatticeCovariances {
    /// Restriction to offsets |j_a| <= half_a.
    pub fn lag_table(&self, half: &[usize]) -> Result<LagTable> {
        let l = &self.lattice;
        let axes = l.axes();
        if half.len() != axes || half.iter().enumerate().any(|(a, &h)| 2 * h >= l.size(a)) {
            return Err(Error::MalformedGrid(
                "lag window exceeds half the lattice".into(),
            ));
        }
        let shape: Vec<usize> = half.iter().map(|h| 2 * h + 1).collect();
        let total: usize = shape.iter().product();
        let pick = |src: &[f64]| -> Vec<f64> {
            let mut out = Vec::with_capacity(total);
            let mut idx = vec![0usize; axes];
            for _ in 0..total {
                let multi: Vec<usize> = idx
                    .iter()
                    .enumerate()
                    .map(|(a, &i)| {
                        let off = i as i64 - half[a] as i64;
                        off.rem_euclid(l.size(a) as i64) as usize
                    })
                    .collect();
                out.push(src[l.index(&multi)]);
                for a in (0..axes).rev() {
                    idx[a] += 1;
                    if idx[a] < shape[a] {
                        break;
                    }
                    idx[a] = 0;
                }
            }
            out
        };
        Ok(LagTable {
            steps: l.steps(),
            half: half.to_vec(),
            cww: pick(&self.cww),
            cvw: self.cvw.as_deref().map(pick),
            cvv: self.cvv.as_deref().map(pick),
        })
    }
}

/// Covariances on a symmetric tensor grid of lags.
#[derive(Debug, Clone)]
pub struct LagTable {
    pub steps: Vec<f64>,
    pub half: Vec<usize>,
    pub cww: Vec<f64>,
    pub cvw: Option<Vec<f64>>,
    pub cvv: Option<Vec<f64>>,
}

impl LagTable {
    /// Flat position of an integer lag, None outside the window.
    pub fn position(&self, lag: &[i64]) -> Option<usize> {
        let mut k = 0usize;
        for (a, &j) in lag.iter().enumerate() {
            let h = self.half[a] as i64;
            if j.abs() > h {
                return None;
            }
            k = k * (2 * self.half[a] + 1) + (j + h) as usize;
        }
        Some(k)
    }
}

/// K∗f on the lattice through the Fourier multiplier. Exact for fields that
/// are trigonometric polynomials on the lattice (every synthesized field).
pub fn convolve_k(field: &LatticeField, mult: &KernelMultiplier) -> Result<Vec<f64>> {
    if mult.lattice != field.lattice {
        return Err(Error::MalformedGrid(
            "multiplier built for another lattice".into(),
        ));
    }
    let fft = NdFft::new(&field.lattice.dims())?;
    let mut x: Vec<Complex64> = field
        .samples
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    fft.forward(&mut x)?;
    for (a, m) in x.iter_mut().zip(mult.values()) {
        *a *= m;
    }
    fft.inverse(&mut x)?;
    Ok(x.iter().map(|c| c.re).collect())
}

/// Spatial-mode twin of [`convolve_k`], against K̃.
pub fn convolve_tilde_k(field: &LatticeField, mult: &KernelMultiplier) -> Result<Vec<f64>> {
    if field.lattice.has_time() {
        return Err(Error::Degenerate(
            "K̃ convolution needs a spatial-mode field".into(),
        ));
    }
    convolve_k(field, mult)
}

/// Causal convolution with the truncated kernel Σ_{ℓ<=L} term_ℓ by direct
/// summation over past times and FFT in space: output at time index i uses
/// field slices i-1, i-2, ... only. Slices before the first one count as
/// zero, so the result is a boundary-affected approximation near t = 0.
pub fn convolve_k_direct(field: &LatticeField, kernel: &LocalizedHeatKernel) -> Result<Vec<f64>> {
    let l = &field.lattice;
    if !l.has_time() {
        return Err(Error::Degenerate(
            "direct convolution needs a space-time field".into(),
        ));
    }
    if kernel.d() != l.d {
        return Err(Error::Degenerate(
            "kernel and field dimensions differ".into(),
        ));
    }
    let finest = 2f64.powi(-(kernel.l_max() as i32));
    if finest < 2.0 * l.dx || finest * finest < 2.0 * l.dt {
        return Err(Error::UnderResolved(format!(
            "finest kernel scale 2^-{} below twice the grid step (dx = {}, dt = {})",
            kernel.l_max(),
            l.dx,
            l.dt
        )));
    }
    let sdims = vec![l.nx; l.d];
    let m: usize = sdims.iter().product();
    let fft = NdFft::new(&sdims)?;
    let lags = ((1.0 / l.dt).floor() as usize).min(l.nt - 1);
    let svol = l.dx.powi(l.d as i32);
    // transformed kernel slices K(j dt, ·) with periodic spatial distance
    let slices: Vec<Vec<Complex64>> = crate::par::map_range(lags, |jm| {
        let s = (jm + 1) as f64 * l.dt;
        let mut v = vec![Complex64::new(0.0, 0.0); m];
        let mut idx = vec![0usize; l.d];
        for slot in v.iter_mut() {
            let x: Vec<f64> = idx
                .iter()
                .map(|&i| signed_index(i, l.nx) as f64 * l.dx)
                .collect();
            *slot = Complex64::new(l.dt * svol * kernel.eval_k(s, &x), 0.0);
            for a in (0..l.d).rev() {
                idx[a] += 1;
                if idx[a] < l.nx {
                    break;
                }
                idx[a] = 0;
            }
        }
        let _ = fft.forward(&mut v);
        v
    });
    let fslices: Vec<Vec<Complex64>> = crate::par::map_range(l.nt, |i| {
        let mut v: Vec<Complex64> = field
            .slice(i)
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect();
        let _ = fft.forward(&mut v);
        v
    });
    let out: Vec<Vec<f64>> = crate::par::map_range(l.nt, |i| {
        let mut acc = vec![Complex64::new(0.0, 0.0); m];
        for j in 1..=lags.min(i) {
            let k = &slices[j - 1];
            let f = &fslices[i - j];
            for ((a, x), y) in acc.iter_mut().zip(k).zip(f) {
                *a += x * y;
            }
        }
        let _ = fft.inverse(&mut acc);
        acc.iter().map(|c| c.re).collect()
    });
    Ok(out.concat())
}

/// Synthesizes Ẇⁿ on the lattice.
pub fn sample_field(
    hurst: &HurstConfig,
    m: &Mollifier,
    n: u32,
    lattice: &Lattice,
    seed: u64,
) -> Result<LatticeField> {
    if hurst.mode() != Mode::SpaceTime {
        return Err(Error::Degenerate(
            "sample_field needs a space-time configuration".into(),
        ));
    }
    SpectralModel::new(hurst, m, n, lattice)?.sample(seed)
}

/// Synthesizes the time-independent spatial noise.
pub fn sample_field_spatial(
    hurst: &HurstConfig,
    m: &Mollifier,
    n: u32,
    lattice: &Lattice,
    seed: u64,
) -> Result<LatticeField> {
    if hurst.mode() != Mode::Spatial {
        return Err(Error::Degenerate(
            "sample_field_spatial needs a spatial configuration".into(),
        ));
    }
    SpectralModel::new(hurst, m, n, lattice)?.sample(seed)
}

fn oscillatory_halfline<F: Fn(f64) -> f64>(f: F, a: f64, lag: f64) -> Result<f64> {
    let period = if lag.abs() > 1e-12 {
        Some(2.0 * PI / lag.abs())
    } else {
        None
    };
    let tol = Tolerance::new(1e-300, 1e-11).with_max_cells(20_000);
    let r = integrate_from_periodic(|u: f64| f(u) * (u * lag).cos(), a, 0.0, period, tol);
    let r = r.require()?;
    Ok(2.0 * r.value)
}

/// Continuum covariance E[Ẇⁿ(z+τ)Ẇⁿ(z)] = c² ∫ |Fρ_n|² N e^{ik·τ}, with
/// τ = (lag_t, lag_x). In spatial mode lag_t is ignored.
pub fn exact_cov(
    hurst: &HurstConfig,
    m: &Mollifier,
    n: u32,
    lag_t: f64,
    lag_x: &[f64],
) -> Result<f64> {
    if lag_x.len() != hurst.d() {
        return Err(Error::Degenerate("lag dimension mismatch".into()));
    }
    let c2 = normalization_constants(hurst)?.c_squared();
    let a = 2f64.powi(-(n as i32));
    let time = match hurst.h0() {
        Some(h0) => oscillatory_halfline(
            |l| m.time_factor(a * a * l).norm_sqr(),
            1.0 - 2.0 * h0,
            lag_t,
        )?,
        None => 1.0,
    };
    let space = if hurst.d() == 1 {
        let a1 = 1.0 - 2.0 * hurst.h()[0];
        oscillatory_halfline(|u| m.space_factor(a * u).powi(2), a1, lag_x[0])?
    } else {
        let spatial = SpectralWeight::new(hurst.spatial_part()?);
        let f = |xi: &[f64]| {
            let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
            let phase: f64 = xi.iter().zip(lag_x).map(|(u, y)| (u * y).cos()).product();
            m.space_factor(a * r).powi(2) * phase
        };
        integrate_singular(&f, &spatial, &Domain::Full, Tolerance::new(1e-300, 1e-9))?
            .require()?
            .value
    };
    Ok(c2 * time * space)
}

/// Tensor rule for ∫_0^U g(u) u^a du: a power map on [0, 1] split into
/// geometric panels, then Gauss-Legendre panels of width at most `width`.
#[derive(Debug, Clone)]
pub(crate) struct PowerRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PowerRule {
    pub(crate) fn new(a: f64, upper: f64, width: f64) -> Self {
        let p = 1.0 / (a + 1.0);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        // u = v^p turns u^a du into p dv on v ∈ [0, 1]
        let mut hi = 1.0;
        for _ in 0..24 {
            let lo = 0.5 * hi;
            let (v, w) = composite_gl(lo, hi, 1, 10);
            for (vv, ww) in v.iter().zip(&w) {
                nodes.push(vv.powf(p));
                weights.push(p * ww);
            }
            hi = lo;
        }
        // the remaining [0, 2^-24] in v as one panel
        let (v, w) = composite_gl(0.0, hi, 1, 10);
        for (vv, ww) in v.iter().zip(&w) {
            nodes.push(vv.powf(p));
            weights.push(p * ww);
        }
        if upper > 1.0 {
            let panels = ((upper - 1.0) / width).ceil().max(1.0) as usize;
            let (u, w) = composite_gl(1.0, upper, panels, 8);
            for (uu, ww) in u.iter().zip(&w) {
                nodes.push(*uu);
                weights.push(ww * uu.powf(a));
            }
        }
        PowerRule { nodes, weights }
    }
}

/// Frequency beyond which |factor(u)|² u^{a+1} stays below 1e-18 of its peak;
/// scanning doubles from `start`. Returns the cap when never reached.
pub(crate) fn spectral_cutoff<F: Fn(f64) -> f64>(power: F, a: f64, start: f64, cap: f64) -> f64 {
    let mut peak = 0.0f64;
    let mut u = start * 1e-3;
    while u <= cap {
        let v = power(u) * u.powf(a + 1.0);
        peak = peak.max(v);
        if u > start && v < 1e-18 * peak {
            return u;
        }
        u *= 1.25;
    }
    cap
}

/// Continuum covariance of the K-field, c² ∫ |Fρ_n|² |FK|² N e^{ik·τ},
/// evaluated on a tensor rule with FK tabulated at the nodes. Space-time
/// mode with d = 1 only.
pub fn exact_cov_kfield(
    hurst: &HurstConfig,
    m: &Mollifier,
    kernel: &LocalizedHeatKernel,
    n: u32,
    lag_t: f64,
    lag_x: &[f64],
) -> Result<f64> {
    let h0 = hurst.h0().ok_or_else(|| {
        Error::Unsupported("exact_cov_kfield is implemented in space-time mode".into())
    })?;
    if hurst.d() != 1 || kernel.d() != 1 || lag_x.len() != 1 {
        return Err(Error::Unsupported(
            "exact_cov_kfield is implemented for d = 1".into(),
        ));
    }
    let c2 = normalization_constants(hurst)?.c_squared();
    let a0 = 1.0 - 2.0 * h0;
    let a1 = 1.0 - 2.0 * hurst.h()[0];
    let sc = 2f64.powi(-(n as i32));
    let lt = spectral_cutoff(
        |l| m.time_factor(sc * sc * l).norm_sqr(),
        a0,
        4f64.powi(n as i32),
        4f64.powi(n as i32 + 12),
    );
    let lx = spectral_cutoff(
        |u| m.space_factor(sc * u).powi(2),
        a1,
        2f64.powi(n as i32),
        2f64.powi(n as i32 + 12),
    );
    let wt = (PI / (lag_t.abs() + 1e-300)).min(0.5);
    let wx = (PI / (lag_x[0].abs() + 1e-300)).min(0.5);
    let rl = PowerRule::new(a0, lt, wt);
    let rx = PowerRule::new(a1, lx, wx);
    let table = kernel.fourier_table(Part::K, &rl.nodes, &rx.nodes)?;
    let nx = rx.nodes.len();
    // the integrand is even in ξ and |FK|² is even in λ
    let mut total = 0.0;
    for (i, (&l, &wl)) in rl.nodes.iter().zip(&rl.weights).enumerate() {
        let tl = m.time_factor(sc * sc * l).norm_sqr() * (l * lag_t).cos() * wl;
        let mut row = 0.0;
        for (j, (&u, &wu)) in rx.nodes.iter().zip(&rx.weights).enumerate() {
            row += wu
                * m.space_factor(sc * u).powi(2)
                * table.values[i * nx + j].norm_sqr()
                * (u * lag_x[0]).cos();
        }
        total += tl * row;
    }
    Ok(4.0 * c2 * total)
}

/// Empirical covariance at an integer lattice lag, averaged over all nodes
/// (periodic).
pub fn empirical_cov(a: &LatticeField, b: &LatticeField, lag: &[i64]) -> Result<f64> {
    if a.lattice != b.lattice || lag.len() != a.lattice.axes() {
        return Err(Error::MalformedGrid("incompatible fields or lag".into()));
    }
    let l = &a.lattice;
    let mut acc = 0.0;
    for k in 0..l.len() {
        let m = l.unravel(k);
        let shifted: Vec<usize> = m
            .iter()
            .enumerate()
            .map(|(ax, &i)| (i as i64 + lag[ax]).rem_euclid(l.size(ax) as i64) as usize)
            .collect();
        acc += a.samples[l.index(&shifted)] * b.samples[k];
    }
    Ok(acc / l.len() as f64)
}

/// Groups flat indices by row for quick look-ups in tests and tools.
pub fn node_map(l: &Lattice) -> HashMap<Vec<usize>, usize> {
    (0..l.len()).map(|k| (l.unravel(k), k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> (HurstConfig, Mollifier, Lattice) {
        let h = HurstConfig::space_time(0.75, &[0.45]).unwrap();
        let m = Mollifier::gauss_gauss(1);
        let l = Lattice::space_time(1, 64, 1.0 / 16.0, 32, 0.25).unwrap();
        (h, m, l)
    }

    #[test]
    fn cell_power_matches_quadrature() {
        let v = cell_power(-0.5, -0.3, 0.7);
        let exact = 2.0 * (0.3f64.sqrt() + 0.7f64.sqrt());
        assert!((v - exact).abs() < 1e-14);
    }

    #[test]
    fn canonical_order_round_trips() {
        for j in 0..20 {
            assert_eq!(canonical_position(canonical_value(j)), j);
        }
        assert_eq!(canonical_value(1), 1);
        assert_eq!(canonical_value(2), -1);
    }

    #[test]
    fn same_seed_same_field() {
        let (h, m, l) = model();
        let sm = SpectralModel::new(&h, &m, 1, &l).unwrap();
        let a = sm.sample(42).unwrap();
        let b = sm.sample(42).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = sm.sample(43).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn common_modes_agree_across_lattices() {
        let (h, m, l) = model();
        // same box, half the resolution in space
        let coarse = Lattice::space_time(1, 64, 1.0 / 16.0, 16, 0.5).unwrap();
        let a = SpectralModel::new(&h, &m, 0, &l).unwrap().coefficients(7);
        let b = SpectralModel::new(&h, &m, 0, &coarse)
            .unwrap()
            .coefficients(7);
        let g = |c: &Vec<Complex64>, amp: &[Complex64], k: usize| c[k] / amp[k];
        let sa = SpectralModel::new(&h, &m, 0, &l).unwrap();
        let sb = SpectralModel::new(&h, &m, 0, &coarse).unwrap();
        for pt in [0usize, 3, 61] {
            for px in [1i64, -2, 5] {
                let ka = l.index(&[pt, px.rem_euclid(32) as usize]);
                let kb = coarse.index(&[pt, px.rem_euclid(16) as usize]);
                let ga = g(&a, &sa.amp, ka);
                let gb = g(&b, &sb.amp, kb);
                assert!((ga - gb).norm() < 1e-12, "{pt} {px}");
            }
        }
    }

    #[test]
    fn lattice_variance_close_to_continuum() {
        let (h, m, _) = model();
        let l = Lattice::for_level(&h, 1, 32.0, 32.0).unwrap();
        let sm = SpectralModel::new(&h, &m, 1, &l).unwrap();
        let exact = exact_cov(&h, &m, 1, 0.0, &[0.0]).unwrap();
        let lat = sm.variance();
        assert!(
            ((lat - exact) / exact).abs() < 5e-3,
            "lattice {lat} continuum {exact}"
        );
        let cov = sm.lattice_covariances().unwrap();
        assert!((cov.cww[0] - lat).abs() < 1e-10 * lat);
    }

    #[test]
    fn lag_table_agrees_with_fft_covariances() {
        let (h, m, l) = model();
        let sm = SpectralModel::new(&h, &m, 1, &l).unwrap();
        let cov = sm.lattice_covariances().unwrap();
        let a = cov.lag_table(&[3, 2]).unwrap();
        let b = sm.lag_covariances(&l.steps(), &[3, 2]).unwrap();
        for (x, y) in a.cww.iter().zip(&b.cww) {
            assert!((x - y).abs() < 1e-10 * a.cww[a.position(&[0, 0]).unwrap()]);
        }
    }

    #[test]
    fn pair_components_are_uncorrelated_in_mean() {
        let (h, m, l) = model();
        let sm = SpectralModel::new(&h, &m, 1, &l).unwrap();
        let (a, b) = sm.sample_pair(3).unwrap();
        let cross = empirical_cov(&a, &b, &[0, 0]).unwrap();
        let va = empirical_cov(&a, &a, &[0, 0]).unwrap();
        assert!(cross.abs() < 0.5 * va);
    }

    #[test]
    fn sampled_multiplier_matches_quadrature_table() {
        let l = Lattice::space_time(1, 256, 1.0 / 64.0, 64, 1.0 / 16.0).unwrap();
        let k = LocalizedHeatKernel::build(1, 12, 1).unwrap();
        let fast = KernelMultiplier::sampled(&k, &l).unwrap();
        // error grows with λ dt; modes near Nyquist carry no mollified mass
        for (pt, px, tol) in [
            (0usize, 0usize, 1e-5),
            (1, 0, 1e-5),
            (3, 2, 1e-5),
            (40, 7, 1e-5),
            (255, 20, 1e-5),
            (100, 63, 3e-5),
        ] {
            let flat = l.index(&[pt, px]);
            let (lambda, xi) = l.wavevector(flat);
            let exact = k.fourier_k(lambda, &xi).unwrap();
            let got = fast.values()[flat];
            assert!((got - exact).norm() < tol, "({pt},{px}): {got} vs {exact}");
        }
    }

    #[test]
    fn constant_field_convolves_to_kernel_mass() {
        let l = Lattice::space_time(1, 32, 1.0 / 8.0, 16, 0.25).unwrap();
        let k = LocalizedHeatKernel::build(1, 12, 1).unwrap();
        let mult = KernelMultiplier::new(&k, &l, None).unwrap();
        let f = LatticeField::from_samples(l.clone(), vec![1.0; l.len()]).unwrap();
        let v = convolve_k(&f, &mult).unwrap();
        let mass = k.fourier_k(0.0, &[0.0]).unwrap().re;
        for x in v {
            assert!((x - mass).abs() < 1e-10);
        }
    }
}
