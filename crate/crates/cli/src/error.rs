use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_VIOLATION: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    /// The config parsed but its model failed validation.
    #[error("invalid config: {0}")]
    Config(noether_core::Error),

    #[error(transparent)]
    Core(#[from] noether_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot serialize report: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn exit_code(&self) -> u8 {
        use noether_core::Error as E;
        match self {
            CliError::Core(e) => match e.root() {
                E::Assumption { .. } | E::Domain { .. } | E::NotProductForm => EXIT_VIOLATION,
                E::Numeric(_) => EXIT_NOT_CONVERGED,
                _ => EXIT_USAGE,
            },
            _ => EXIT_USAGE,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
