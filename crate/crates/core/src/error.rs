use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library. Every variant maps onto one of the CLI exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed arguments or violated preconditions.
    #[error("input error: {0}")]
    Input(String),

    /// The request is valid but exceeds what can be enumerated or evaluated.
    #[error("capability error: {0}")]
    Capability(String),

    /// An internal invariant failed. Indicates a bug or a broken oracle.
    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn capability(msg: impl Into<String>) -> Self {
        Error::Capability(msg.into())
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code used by the command-line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Capability(_) => 2,
            Error::Input(_) | Error::Parse { .. } | Error::Io { .. } | Error::Serde(_) => 3,
            Error::Invariant(_) => 4,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
