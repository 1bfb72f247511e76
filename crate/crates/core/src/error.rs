use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("analysis error: {0}")]
    Analysis(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("truncation error: {0}")]
    Truncation(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("non-finite value on path {path}: {detail}")]
    NonFinite { path: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
