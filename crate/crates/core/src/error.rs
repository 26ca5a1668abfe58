//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any operation in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Underlying I/O failure while reading or writing files.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A file exists but its contents do not match the expected format.
    #[error("format error: {0}")]
    Format(String),

    /// Caller violated an operation precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Numerical failure (non-finite values, eigensolver breakdown, boundary blow-up).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Input is degenerate for the requested statistic (e.g. constant vector
    /// for a rank correlation). The caller decides the fallback.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// The optimizer hit a non-finite objective mid-run. Carries the last
    /// iterate that still evaluated to a finite objective.
    #[error("optimization error: {message}")]
    Optimization {
        message: String,
        last_iterate: Box<[f64]>,
    },
}

impl Error {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
