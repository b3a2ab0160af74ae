use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid boundary: {0}")]
    InvalidBoundary(String),
    #[error("point out of range: {0}")]
    OutOfRange(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
