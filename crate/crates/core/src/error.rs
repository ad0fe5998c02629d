use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} is out of domain (got {value})")]
    Domain { what: &'static str, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point {index} has norm {norm}, expected 1 within 1e-12")]
    NotUnitNorm { index: usize, norm: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("quadrature did not converge within {evaluations} evaluations (error estimate {estimate:e})")]
    NoConvergence { evaluations: usize, estimate: f64 },

    #[error("integer overflow while evaluating {0}")]
    Overflow(&'static str),

    #[error("parameters not in general position: layer {layer} point {point} has pre-activation {value:e} inside the finite-difference margin")]
    NearKink { layer: usize, point: usize, value: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn domain(what: &'static str, value: f64) -> Error {
    Error::Domain { what, value }
}
