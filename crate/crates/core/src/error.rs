use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("state error: {0}")]
    State(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl AdsError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AdsError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user configuration or arguments.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            AdsError::Config(_) | AdsError::Parse { .. } | AdsError::InvalidParameter(_)
        ) || matches!(self, AdsError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}

pub type Result<T> = std::result::Result<T, AdsError>;
