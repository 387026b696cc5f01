use std::path::{Path, PathBuf};

use thiserror::Error;

/// Exit status for usage, configuration and I/O errors.
pub const EXIT_USAGE: u8 = 1;
/// Exit status when a benchmark invariant or verification check fails.
pub const EXIT_INVARIANT: u8 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] unirag_core::Error),

    #[error("invariant violated: {}", .0.join("; "))]
    Invariant(Vec<String>),

    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invariant(_) | CliError::Verification(_) => EXIT_INVARIANT,
            _ => EXIT_USAGE,
        }
    }
}
