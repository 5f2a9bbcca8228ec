use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] nll_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl ExperimentError {
    /// Process exit code: 3 for numeric failures during training, 2 for
    /// everything else (bad config, unreadable data, unwritable output).
    pub fn exit_code(&self) -> u8 {
        match self {
            ExperimentError::Core(nll_core::Error::Numeric(_)) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

pub(crate) fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> ExperimentError {
    let path = path.into();
    move |source| ExperimentError::Io { path, source }
}
