use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
///
/// The variants are grouped so the CLI can map them onto exit codes:
/// usage problems, data/schema problems, and numeric runtime failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}:{column}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: schema error: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("missing sequence coverage: {missing:?}")]
    MissingSequences { missing: Vec<String> },

    #[error("no matching hardware/simulation pairs")]
    NoPairs,

    #[error("actuator model configuration: {0}")]
    Model(String),

    #[error("non-finite state at joint {joint}, substep {substep}")]
    NonFinite { joint: usize, substep: usize },

    #[error("objective failed in generation {generation}: {source}")]
    Objective {
        generation: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config {path}:{line}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("snapshot: {0}")]
    Snapshot(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 usage, 3 data/schema, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config { .. } => 2,
            Error::Parse { .. }
            | Error::Schema { .. }
            | Error::Dimension(_)
            | Error::MissingSequences { .. }
            | Error::NoPairs
            | Error::Io { .. }
            | Error::Snapshot(_) => 3,
            Error::Model(_) | Error::NonFinite { .. } | Error::Objective { .. } => 4,
        }
    }
}
