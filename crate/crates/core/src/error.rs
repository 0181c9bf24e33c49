use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A precondition of a privacy or convergence result does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("sample {sample} used {count} times (limit {limit})")]
    PrivacyViolation { sample: usize, count: u32, limit: u32 },

    #[error("{what}: malformed data at byte offset {offset}: {message}")]
    Format {
        what: String,
        offset: u64,
        message: String,
    },

    #[error("{path}: row {row}: {message}")]
    Csv {
        path: String,
        row: usize,
        message: String,
    },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("dataset file {} not found; {hint}", path.display())]
    DatasetMissing { path: PathBuf, hint: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
