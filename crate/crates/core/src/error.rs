use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("episode already finished")]
    EpisodeFinished,

    #[error("action {action} out of range for {actions} actions")]
    InvalidAction { action: usize, actions: usize },

    #[error("trajectory for task {task_id} is incomplete")]
    IncompleteTrajectory { task_id: u64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("group of size {size} is too small (need at least {min})")]
    InsufficientGroup { size: usize, min: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("unknown estimator `{0}`")]
    UnknownEstimator(String),

    #[error("corrupt record: {0}")]
    CorruptRecord(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
