use std::io;

use thiserror::Error;

/// Failure classes shared by every module. Each maps to a stable process exit code.
#[derive(Debug, Error)]
pub enum Error {
    /// The caller broke a precondition (bad argument, empty input, dt <= 0).
    #[error("usage error: {0}")]
    Usage(String),

    /// Input data or a file on disk is malformed.
    #[error("data error: {0}")]
    Data(String),

    /// A numerical singularity was hit during integration.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code: 1 usage, 2 data (and I/O), 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Data(_) | Error::Io(_) => 2,
            Error::Numeric(_) => 3,
        }
    }

    /// Prefix the message with context, keeping the error class.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Usage(m) => Error::Usage(format!("{ctx}: {m}")),
            Error::Data(m) => Error::Data(format!("{ctx}: {m}")),
            Error::Numeric(m) => Error::Numeric(format!("{ctx}: {m}")),
            Error::Io(e) => Error::Io(io::Error::new(e.kind(), format!("{ctx}: {e}"))),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
