use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("gradient tape already consumed by a previous backward pass")]
    TapeConsumed,

    #[error("malformed serialized data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(expected: impl ToString, got: impl ToString) -> Error {
    Error::Shape {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
