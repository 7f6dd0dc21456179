use thiserror::Error;

/// Errors raised across the simulation stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("resource cap exceeded: {0}")]
    Resource(String),
    #[error("correlation length undefined: {0}")]
    UndefinedLength(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI on stderr.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::Dimension(_) | Error::Shape(_) | Error::Validation(_) => "E_CONFIG",
            Error::Numeric(_) | Error::UndefinedLength(_) => "E_NUMERIC",
            Error::Resource(_) => "E_RESOURCE",
            Error::Input(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => "E_INPUT",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
