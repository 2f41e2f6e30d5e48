use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClvqError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid arrangement: {0}")]
    InvalidArrangement(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("operation requires d = 2, got d = {0}")]
    RequiresPlanar(usize),

    #[error("empty codebook")]
    EmptyCodebook,

    #[error("could not draw affinely independent points after {0} attempts")]
    DegenerateSource(usize),

    #[error("malformed region label `{0}`")]
    MalformedLabel(String),
}

pub type Result<T> = std::result::Result<T, ClvqError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> ClvqError {
    ClvqError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
