//! Numerical laboratory for the parabolic operator `H = ∂t − divₓ((S+D)∇ₓ)` on
//! a periodic space–time lattice.
//!
//! The crate provides exact Fourier-multiplier calculus on the lattice,
//! coefficient generators, the operator and its resolvents, the square root by
//! resolvent quadrature with a dense oracle, Littlewood–Paley tools,
//! off-diagonal decay checks, Carleson and Tb diagnostics, and a report layer.

pub mod carleson;
pub mod coefficients;
pub mod dyadic;
pub mod error;
mod float_serde;
pub mod lattice;
pub mod lp;
pub mod offdiag;
pub mod operator;
pub mod reduce;
pub mod report;
pub mod resolvent;
pub mod sampling;
pub mod sqrt;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
