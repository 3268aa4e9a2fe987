use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("wire {wire} out of range for a {num_qubits}-qubit register")]
    WireOutOfRange { wire: usize, num_qubits: usize },

    #[error("control and target wire are both {0}")]
    DuplicateWire(usize),

    #[error("{0} gate requires an angle")]
    MissingParameter(&'static str),

    #[error("{kind} slot {slot} not covered by {available} supplied values")]
    SlotOutOfRange {
        kind: &'static str,
        slot: usize,
        available: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("autodiff: {0}")]
    Autodiff(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("checkpoint format: {0}")]
    Format(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse grouping used for process exit codes and message prefixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Format,
    Numeric,
    Io,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) | Error::ConfigMismatch(_) => {
                ErrorCategory::Usage
            }
            Error::Dataset(_) => ErrorCategory::Data,
            Error::Format(_) => ErrorCategory::Format,
            Error::Io { .. } => ErrorCategory::Io,
            _ => ErrorCategory::Numeric,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Usage => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Format => 4,
            ErrorCategory::Numeric => 5,
            ErrorCategory::Io => 6,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorCategory::Usage => "usage",
            ErrorCategory::Data => "data",
            ErrorCategory::Format => "format",
            ErrorCategory::Numeric => "numeric",
            ErrorCategory::Io => "io",
        }
    }
}
