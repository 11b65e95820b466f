use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::output::Format;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: kpp_core::Error,
    },

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("artifact `{artifact}` cannot be written as {format}")]
    Unsupported { artifact: &'static str, format: Format },

    #[error("checkpoint {} has format version {found}, expected {expected}", path.display())]
    Version { path: PathBuf, found: String, expected: String },

    #[error("checkpoint {} is corrupted: {reason}", path.display())]
    Corrupted { path: PathBuf, reason: String },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn stage(stage: &'static str) -> impl FnOnce(kpp_core::Error) -> Self {
        move |source| CliError::Stage { stage, source }
    }

    /// Process exit status: 2 for configuration problems, 3 for numerical
    /// failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Unsupported { .. } => 2,
            CliError::Stage { source: kpp_core::Error::InvalidInput(_), .. } => 2,
            CliError::Stage { .. } => 3,
            CliError::Io { .. } | CliError::Version { .. } | CliError::Corrupted { .. } => 4,
        }
    }
}
