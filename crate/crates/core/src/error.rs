use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A statistic is undefined for the given distribution, e.g. a
    /// correlation with a vanishing marginal variance.
    #[error("degenerate statistic: {0}")]
    DegenerateStatistic(String),

    #[error("projection undefined: {0}")]
    ProjectionUndefined(String),

    #[error("optimization failed: {0}")]
    OptimizationFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
