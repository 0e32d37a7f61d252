use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A region or state space is too large to enumerate.
    #[error("{what} has {size} variables, exceeding the enumeration cap of {cap}")]
    Capacity {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("region violation: {0}")]
    Region(String),

    #[error("gradient ascent did not converge after {iterations} iterations (max |gradient| = {grad_max:e})")]
    NoConvergence { iterations: usize, grad_max: f64 },

    /// The data lie on the boundary of the attainable moments, so the
    /// likelihood has no maximizer.
    #[error("likelihood has no maximizer: {0}")]
    Unbounded(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}
