use std::path::PathBuf;

use crate::config::ConfigError;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] score_core::Error),
    #[error("training diverged: non-finite loss at step {step} ({run})")]
    NonFinite { run: String, step: usize },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl LabError {
    /// 2 for configuration and output problems, 3 for numerical aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::NonFinite { .. } => 3,
            _ => 2,
        }
    }
}
