use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ModlError>;

#[derive(Debug, Error)]
pub enum ModlError {
    /// The ridge system for a code could not be factored reliably.
    #[error("ill-conditioned code system (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{context}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl ModlError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        ModlError::Io {
            context: context.into(),
            source,
        }
    }

    /// Coarse classification used for process exit statuses.
    pub fn kind(&self) -> ErrorKind {
        match self {
            ModlError::InvalidConfig(_) => ErrorKind::Config,
            ModlError::IllConditioned { .. } => ErrorKind::Numeric,
            ModlError::Dimension(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}
