use thiserror::Error;

/// Errors raised by the bound, tuning, moment and experiment routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied parameter violates a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The weight-tuning system has no usable solution (gamma0 = 0).
    #[error("degenerate tuning: {0}")]
    Degenerate(String),

    /// A numeric evaluation produced a non-finite or non-positive value
    /// where a positive one is required.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A requested computation exceeds the exhaustive-enumeration budget.
    #[error("budget exceeded: {0}")]
    Budget(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
