//! Desk-scale numerics for conjugated ∂̄-Laplacian families on a Riemann
//! surface model: zeta-regularized determinants and their variation, Green
//! kernels and the cocycle pairing at the trivial bundle, and a small algebra
//! of formal distribution products.

pub mod cli;
pub mod error;
pub mod green;
pub mod io;
pub mod laurent;
pub mod prodist;
pub mod quadrature;
pub mod selftest;
pub mod spectral;
pub mod surface;
pub mod symplectic;
pub mod zeta;

pub use error::{Error, Result};
