use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite cost for rollout {index}")]
    NonFiniteCost { index: usize },

    #[error("stage size {stage_size} exceeds horizon {horizon}")]
    StageExceedsHorizon { stage_size: usize, horizon: usize },

    #[error("no utilization coefficients for stage size {0}")]
    UnknownStageSize(usize),

    #[error("utilization table {path}, line {line}: {msg}")]
    TableParse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("scenario file {path}: {msg}")]
    ScenarioParse { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
