use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Nothing usable to build a prompt from.
    #[error("cannot build prompt for {entity}: {msg}")]
    Prompt { entity: String, msg: String },

    /// A user prompt needs the profiles of the items it mentions.
    #[error("user {user} interacted with item {item}, which has no profile yet")]
    MissingItemProfile { user: String, item: String },

    #[error("request to {endpoint} failed: {msg}")]
    Transport { endpoint: String, msg: String },

    #[error("{endpoint} answered HTTP {status}: {body}")]
    Http {
        endpoint: String,
        status: u16,
        body: String,
    },

    #[error("unexpected response from {endpoint}: {msg}")]
    Protocol { endpoint: String, msg: String },

    #[error("no parseable profile after {attempts} attempts; last reply: {last_reply:?}")]
    Unparseable { attempts: usize, last_reply: String },

    #[error("embedding error: {0}")]
    Embedding(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Core(#[from] semrec_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Failures of the remote service (as opposed to bad input data).
    pub fn is_service_error(&self) -> bool {
        matches!(
            self,
            Error::Transport { .. } | Error::Http { .. } | Error::Protocol { .. } | Error::Unparseable { .. }
        )
    }
}
