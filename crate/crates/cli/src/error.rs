use std::path::Path;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, bad config values, missing inputs.
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] countlab::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 1 for usage and configuration errors, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(countlab::Error::InvalidArgument(_) | countlab::Error::Config(_)) => 1,
            CliError::Core(_) | CliError::Io { .. } => 2,
        }
    }
}
