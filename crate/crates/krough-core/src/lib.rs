//! Numerical toolkit for K-rough paths above fractional Brownian noise.
//!
//! The crate builds the mollified noise by spectral synthesis, evaluates the
//! renormalization constants by singular quadrature, checks the moment
//! scaling of the first and second level pairings, and solves the
//! renormalized parabolic Anderson approximation.
//!
//! Data parallelism goes through [`par`], which uses rayon when the
//! `parallel` feature is on (the default) and plain iterators otherwise.

pub mod error;
pub mod fft;
pub mod field_synthesis;
pub mod io;
pub mod kernels;
pub mod krough;
pub mod pam_solver;
pub mod par;
pub mod quadrature;
pub mod special;
pub mod spectral_model;
pub mod testfn;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
