use thiserror::Error;

/// Errors raised by scheme construction, lattice building and the backward solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported order {order} (maximum {max})")]
    UnsupportedOrder { order: usize, max: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("picard iteration did not converge after {iterations} iterations (last increment {residual:e})")]
    PicardNonConvergence { iterations: usize, residual: f64 },

    #[error("backward step {step} failed at x = {x}: picard stalled after {iterations} iterations")]
    StepFailure {
        step: usize,
        x: f64,
        iterations: usize,
    },

    #[error("terminal layers need the exact solution u and its space derivative")]
    InitializationUnavailable,

    #[error("instance too large: {0}")]
    SizeLimit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
