use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("total internal reflection: no transmitted ray for this configuration")]
    TotalInternalReflection,

    #[error("empty mask: operation requires at least one masked pixel")]
    EmptyMask,

    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error("integrity error in {file}: {message}")]
    Integrity { file: String, message: String },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("scene sampling failed: {0}")]
    Sampling(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
