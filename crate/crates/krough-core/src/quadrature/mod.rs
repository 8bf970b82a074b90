//! Singular-weight quadrature and the renormalization constants.

mod constants;
mod engine;
mod singular;

pub use constants::*;
pub use engine::{
    adaptive, adaptive_panels, gk15, integrate_from, integrate_from_periodic, integrate_halfline,
    integrate_power, QValue, QuadratureResult, Tolerance,
};
pub use singular::{integrate_singular, Domain};
