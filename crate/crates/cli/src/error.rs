use std::io;

use symvi_core::Error as CoreError;

/// Failure of a CLI run, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("optimization failed: {0}")]
    Optimization(String),
    #[error("{0} verification check(s) failed")]
    Verification(usize),
    #[error("cannot write output: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io(_) => 2,
            Self::Optimization(_) => 3,
            Self::Verification(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidInput(msg) => Self::Config(msg),
            other => Self::Optimization(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Io(io::Error::other(e))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
