use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported checkpoint version {found} (this build reads version {expected})")]
    Version { found: i64, expected: i64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::Config(msg.into()))
}
