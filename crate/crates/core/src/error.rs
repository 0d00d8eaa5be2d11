use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    /// A local probability that should be positive vanished on the grid.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("rejection sampler exceeded {0} iterations; envelope misconfigured")]
    RejectionCap(usize),

    #[error("path exceeded {0} arrivals; inter-arrival law is misconfigured")]
    PathLength(usize),

    #[error("renewal discretization too coarse: {0}")]
    Discretization(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
