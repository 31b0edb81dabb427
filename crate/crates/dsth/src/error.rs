//! Error type shared by all modules.

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Underlying filesystem failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A file does not conform to its declared binary format. The offset is
    /// the byte position at which the violation was detected.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// Matrix or code dimensions do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Invalid configuration or parameters outside their documented domain.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Numerical failure (indefinite solve, non-finite objective, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
