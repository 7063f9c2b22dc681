use std::path::PathBuf;

use crate::envs::EnvId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("rollout diverged at step {step}")]
    Divergence { step: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("bad magic bytes, not a {0} file")]
    Magic(&'static str),

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("environment mismatch: expected {expected}, found {found}")]
    EnvMismatch { expected: EnvId, found: EnvId },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("forward cache does not match the batch being differentiated")]
    CacheMismatch,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("training produced a non-finite loss at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error("every candidate solve failed")]
    AllCandidatesFailed,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
