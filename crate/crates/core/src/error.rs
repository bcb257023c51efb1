use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("empty result: {0}")]
    Empty(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A vector that must have a direction (cosine similarity) has zero norm.
    #[error("degenerate embedding: {0}")]
    Degenerate(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad or inconsistent input data.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Empty(_)
                | Error::InvalidInput(_)
                | Error::Checkpoint(_)
                | Error::Json(_)
        )
    }
}
