//! Crate-wide error type, mapped to process exit codes by the CLI.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("network error: status {status}{}", retry_after.map(|s| format!(" (rate limited, retry after {s}s)")).unwrap_or_default())]
    HttpStatus { status: u16, retry_after: Option<u64> },

    #[error("network error: {0}")]
    Network(String),

    #[error("request timed out")]
    Timeout,
}

impl Error {
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// CLI exit code: 1 usage, 2 I/O or format, 3 network, 4 validation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Io(_) | Error::Parse { .. } | Error::Format(_) => 2,
            Error::HttpStatus { .. } | Error::Network(_) | Error::Timeout => 3,
            Error::Validation(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
