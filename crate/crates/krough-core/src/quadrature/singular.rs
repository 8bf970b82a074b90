//! Nested per-axis integration against the spectral weight.

use std::cell::Cell;

use super::engine::{adaptive, integrate_from, integrate_power, QuadratureResult, Tolerance};
use crate::error::{Error, Result};
use crate::spectral_model::{Mode, SpectralWeight};

/// Integration domains. Coordinates are (λ, ξ_1..ξ_d) in space-time mode and
/// (ξ_1..ξ_d) in spatial mode.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Full,
    /// λ² + Σ ξ_i⁴ ≤ r⁴.
    ParabolicBall {
        radius: f64,
    },
    /// λ² + Σ ξ_i⁴ > r⁴.
    ParabolicComplement {
        radius: f64,
    },
    /// |λ| + |ξ|² ≥ c.
    Cutoff {
        c: f64,
    },
    /// |coordinate k| ≤ half[k].
    Box {
        half: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy)]
enum State {
    Free,
    Ball(f64),
    Outside(f64),
    Cut(f64),
}

struct Ctx<'a> {
    f: &'a dyn Fn(&[f64]) -> f64,
    exps: Vec<f64>,
    time_axis: bool,
    domain: &'a Domain,
    tol: Tolerance,
    ok: Cell<bool>,
    cells: Cell<usize>,
}

impl Ctx<'_> {
    fn parabolic(&self, k: usize, x: f64) -> f64 {
        if k == 0 && self.time_axis {
            x * x
        } else {
            x.powi(4)
        }
    }

    fn parabolic_inv(&self, k: usize, b: f64) -> f64 {
        if k == 0 && self.time_axis {
            b.sqrt()
        } else {
            b.powf(0.25)
        }
    }

    fn cut(&self, k: usize, x: f64) -> f64 {
        if k == 0 && self.time_axis {
            x
        } else {
            x * x
        }
    }

    fn cut_inv(&self, k: usize, b: f64) -> f64 {
        if k == 0 && self.time_axis {
            b
        } else {
            b.sqrt()
        }
    }

    fn level_tol(&self, k: usize) -> Tolerance {
        let depth = self.exps.len() - 1 - k;
        Tolerance {
            rel: self.tol.rel * 0.2f64.powi(depth as i32),
            abs: self.tol.abs * 1e-3,
            ..self.tol
        }
    }

    fn range<G: Fn(f64) -> f64>(&self, k: usize, g: G, lo: f64, hi: f64) -> f64 {
        let e = self.exps[k];
        let tol = self.level_tol(k);
        let r: QuadratureResult = if hi.is_infinite() {
            integrate_from(g, e, lo, tol)
        } else if hi <= lo {
            QuadratureResult::exact(0.0)
        } else if lo == 0.0 {
            integrate_power(g, e, 0.0, hi, tol)
        } else {
            adaptive(|x: f64| g(x) * x.powf(e), lo, hi, tol)
        };
        if !r.converged {
            self.ok.set(false);
        }
        self.cells.set(self.cells.get() + r.cells_used);
        r.value
    }

    fn axis(&self, k: usize, prefix: &mut Vec<f64>, state: State) -> f64 {
        let last = k + 1 == self.exps.len();
        let eval = |x: f64, st: State| -> f64 {
            let mut p = prefix.clone();
            p.push(x);
            if last {
                (self.f)(&p)
            } else {
                self.axis(k + 1, &mut p, st)
            }
        };
        match (self.domain, state) {
            (Domain::Box { half }, _) => self.range(k, |x| eval(x, State::Free), 0.0, half[k]),
            (_, State::Free) => self.range(k, |x| eval(x, State::Free), 0.0, f64::INFINITY),
            (_, State::Ball(b)) => {
                let hi = self.parabolic_inv(k, b);
                self.range(
                    k,
                    |x| eval(x, State::Ball(b - self.parabolic(k, x))),
                    0.0,
                    hi,
                )
            }
            (_, State::Outside(b)) => {
                if b <= 0.0 {
                    return self.range(k, |x| eval(x, State::Free), 0.0, f64::INFINITY);
                }
                let edge = self.parabolic_inv(k, b);
                let outer = self.range(k, |x| eval(x, State::Free), edge, f64::INFINITY);
                if last {
                    outer
                } else {
                    outer
                        + self.range(
                            k,
                            |x| eval(x, State::Outside(b - self.parabolic(k, x))),
                            0.0,
                            edge,
                        )
                }
            }
            (_, State::Cut(b)) => {
                if b <= 0.0 {
                    return self.range(k, |x| eval(x, State::Free), 0.0, f64::INFINITY);
                }
                let edge = self.cut_inv(k, b);
                let outer = self.range(k, |x| eval(x, State::Free), edge, f64::INFINITY);
                if last {
                    outer
                } else {
                    outer + self.range(k, |x| eval(x, State::Cut(b - self.cut(k, x))), 0.0, edge)
                }
            }
        }
    }
}

/// ∫ f · N over `domain`, with f assumed even in every coordinate so that
/// the integral is 2^{axes} times the positive orthant. Each axis carries its
/// |x|^{1-2H} weight through a power substitution near zero.
pub fn integrate_singular(
    f: &dyn Fn(&[f64]) -> f64,
    weight: &SpectralWeight,
    domain: &Domain,
    tol: Tolerance,
) -> Result<QuadratureResult> {
    let hurst = weight.hurst();
    let exps = hurst.weight_exponents();
    let time_axis = weight.mode() == Mode::SpaceTime;
    let axes = exps.len();
    let state = match domain {
        Domain::Full => State::Free,
        Domain::ParabolicBall { radius } => State::Ball(radius.powi(4)),
        Domain::ParabolicComplement { radius } => State::Outside(radius.powi(4)),
        Domain::Cutoff { c } => State::Cut(*c),
        Domain::Box { half } => {
            if half.len() != axes || half.iter().any(|h| !(*h > 0.0)) {
                return Err(Error::MalformedGrid(format!(
                    "box needs {axes} positive half-widths"
                )));
            }
            State::Free
        }
    };
    let ctx = Ctx {
        f,
        exps,
        time_axis,
        domain,
        tol,
        ok: Cell::new(true),
        cells: Cell::new(0),
    };
    let mut prefix = Vec::with_capacity(axes);
    let v = ctx.axis(0, &mut prefix, state) * 2f64.powi(axes as i32);
    let converged = ctx.ok.get() && v.is_finite();
    Ok(QuadratureResult {
        value: v,
        error_estimate: tol.rel * v.abs(),
        converged,
        cells_used: ctx.cells.get(),
    })
}
