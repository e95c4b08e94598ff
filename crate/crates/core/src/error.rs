use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("coefficient is not coercive (minimum sampled value {min})")]
    NotCoercive { min: f64 },

    #[error("sum of expansion sup-norms {sum} exceeds the admissible bound {bound}")]
    BoundViolated { sum: f64, bound: f64 },

    #[error("iterative solver stalled after {iterations} iterations (relative residual {residual:e})")]
    SolverStalled { iterations: usize, residual: f64 },

    #[error("problem too large: {dofs} unknowns need about {bytes} bytes (limit {limit})")]
    TooLarge { dofs: usize, bytes: usize, limit: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("macro points or parameters do not match the cell solutions")]
    MismatchedPoints,

    #[error("observation mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("quadrature spacing {spacing} is coarser than the required {limit}")]
    GridTooCoarse { spacing: f64, limit: f64 },

    #[error("covariance matrix is not positive definite")]
    SingularCovariance,

    #[error("forward solve failed at z = {z:?}: {source}")]
    ForwardFailure { z: Vec<f64>, source: Box<Error> },

    #[error("normalizing constant underflows (log estimate {log_estimate})")]
    Underflow { log_estimate: f64 },

    #[error("Monte-Carlo error {noise:e} exceeds the signal {signal:e}; refusing slope fit")]
    SignalBelowNoise { signal: f64, noise: f64 },

    #[error("unknown catalogue id `{0}`")]
    UnknownId(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
