use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EssfError {
    /// An argument is outside the domain of the operation.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A value violates the invariants of the type being built.
    #[error("invalid construction: {0}")]
    Construction(String),
    /// The operation is not defined for the given state or parameters.
    #[error("precondition failed: {0}")]
    Precondition(String),
    /// Malformed serialized input.
    #[error("parse error: {0}")]
    Parse(String),
    /// A simulation exceeded a resource limit.
    #[error("limit exceeded: {0}")]
    Limit(String),
}

pub type Result<T> = std::result::Result<T, EssfError>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(EssfError::Argument(msg.into()))
}

pub(crate) fn construction<T>(msg: impl Into<String>) -> Result<T> {
    Err(EssfError::Construction(msg.into()))
}

pub(crate) fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(EssfError::Precondition(msg.into()))
}

pub(crate) fn parse<T>(msg: impl Into<String>) -> Result<T> {
    Err(EssfError::Parse(msg.into()))
}
