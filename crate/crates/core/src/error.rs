use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PveError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no convergence after {iterations} iterations (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Divergence { iteration: usize, loss: f64 },

    #[error("internal consistency error: {0}")]
    Internal(String),
}

pub type Result<T, E = PveError> = std::result::Result<T, E>;

pub(crate) fn shape_err(what: impl Into<String>) -> PveError {
    PveError::Shape(what.into())
}
