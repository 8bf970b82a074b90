//! Multi-dimensional complex FFT on row-major arrays, built on rustfft.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Plans for every axis of a fixed shape.
pub struct NdFft {
    dims: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl NdFft {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&n| n == 0) {
            return Err(Error::MalformedGrid(format!("bad FFT shape {dims:?}")));
        }
        let mut planner = FftPlanner::new();
        let forward = dims.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = dims.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        Ok(NdFft {
            dims: dims.to_vec(),
            forward,
            inverse,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform, Σ x_j e^{-2πi jk/N}.
    pub fn forward(&self, data: &mut [Complex64]) -> Result<()> {
        self.run(data, true)
    }

    /// Inverse transform including the 1/N factor.
    pub fn inverse(&self, data: &mut [Complex64]) -> Result<()> {
        self.run(data, false)?;
        let s = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
        Ok(())
    }

    /// Inverse transform without normalization, Σ X_k e^{+2πi jk/N}.
    pub fn synthesize(&self, data: &mut [Complex64]) -> Result<()> {
        self.run(data, false)
    }

    fn run(&self, data: &mut [Complex64], fwd: bool) -> Result<()> {
        if data.len() != self.len() {
            return Err(Error::MalformedGrid(format!(
                "FFT buffer of {} for shape {:?}",
                data.len(),
                self.dims
            )));
        }
        let nd = self.dims.len();
        for axis in 0..nd {
            let n = self.dims[axis];
            let plan = if fwd {
                &self.forward[axis]
            } else {
                &self.inverse[axis]
            };
            let inner: usize = self.dims[axis + 1..].iter().product();
            let outer: usize = self.dims[..axis].iter().product();
            if inner == 1 {
                plan.process(data);
                continue;
            }
            // gather strided lines, transform, scatter back
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            for o in 0..outer {
                let base = o * n * inner;
                for i in 0..inner {
                    for k in 0..n {
                        line[k] = data[base + k * inner + i];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for k in 0..n {
                        data[base + k * inner + i] = line[k];
                    }
                }
            }
        }
        Ok(())
    }
}

/// Signed frequency index of bin k in a length-n transform.
pub fn signed_index(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_dft_in_2d() {
        let dims = [4usize, 6];
        let f = NdFft::new(&dims).unwrap();
        let x: Vec<Complex64> = (0..24)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64).cos()))
            .collect();
        let mut y = x.clone();
        f.forward(&mut y).unwrap();
        for k0 in 0..4 {
            for k1 in 0..6 {
                let mut s = Complex64::new(0.0, 0.0);
                for j0 in 0..4 {
                    for j1 in 0..6 {
                        let ph = -2.0
                            * std::f64::consts::PI
                            * ((j0 * k0) as f64 / 4.0 + (j1 * k1) as f64 / 6.0);
                        s += x[j0 * 6 + j1] * Complex64::from_polar(1.0, ph);
                    }
                }
                assert!((s - y[k0 * 6 + k1]).norm() < 1e-12);
            }
        }
        f.inverse(&mut y).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn signed_indices() {
        assert_eq!(signed_index(0, 8), 0);
        assert_eq!(signed_index(4, 8), 4);
        assert_eq!(signed_index(5, 8), -3);
    }
}
