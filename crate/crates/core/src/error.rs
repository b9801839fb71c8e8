use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, BalError>;

#[derive(Debug, Error)]
pub enum BalError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid argument: {0}")]
    Usage(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("cannot allocate {what} ({bytes} bytes)")]
    OutOfMemory { what: &'static str, bytes: usize },

    #[error("malformed fit artifact: {0}")]
    Artifact(String),
}

impl BalError {
    pub fn data(msg: impl Into<String>) -> Self {
        BalError::Data(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        BalError::Usage(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        BalError::Numerical(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            BalError::Usage(_) => 2,
            BalError::Numerical(_) => 4,
            _ => 3,
        }
    }
}
