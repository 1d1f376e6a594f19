use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("model violation: {0}")]
    ModelViolation(String),

    #[error("incompatible sketches: {0}")]
    Incompatible(String),

    #[error("sketch corruption: {0}")]
    Corruption(String),

    #[error("protocol failure: {0}")]
    ProtocolFailure(String),

    #[error("timeout: {0}")]
    Timeout(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Param(msg.into()))
}
