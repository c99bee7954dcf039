use thiserror::Error;

/// Failures raised by the numerical and symbolic routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("rank mismatch: {left} vs {right}")]
    RankMismatch { left: usize, right: usize },

    #[error("trace-free cocycle has coefficient at degree {degree} with |tr| = {trace:e}")]
    NotTraceFree { degree: i32, trace: f64 },

    #[error("series escapes window [{min}, {max}]: escaped norm {escaped:e}")]
    WindowOverflow { min: i32, max: i32, escaped: f64 },

    #[error("pole of the cocycle at {location}")]
    PoleOnContour { location: String },

    #[error("singular matrix (condition number {condition:e})")]
    Singular { condition: f64 },

    #[error("ill-conditioned design matrix (condition {condition:e}); change the fit window")]
    IllConditioned { condition: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("divergence basis mismatch: fit residual {residual:e} exceeds {tolerance:e}")]
    BasisMismatch { residual: f64, tolerance: f64 },

    #[error("non-positive spectrum: eigenvalue {0:e}")]
    NonPositiveSpectrum(f64),

    #[error("coefficient table order {order} cannot cover degree {degree}")]
    TableOrder { order: usize, degree: i32 },

    #[error("aliasing: coefficient tail {tail:e} above tolerance")]
    Aliasing { tail: f64 },

    #[error("normalization inconsistent: spread {spread:e}")]
    Inconsistent { spread: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
