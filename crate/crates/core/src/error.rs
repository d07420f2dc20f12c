use thiserror::Error;

/// Errors raised by estimators, samplers and harnesses.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Sinkhorn ran out of sweeps before both marginals were within tolerance.
    #[error("sinkhorn did not converge after {iterations} iterations (marginal violation {violation:e})")]
    NotConverged { iterations: usize, violation: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A harness result was invalidated by too many failed trials.
    #[error("statistical invalidation: {0}")]
    Invalidated(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
