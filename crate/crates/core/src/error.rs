use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A model, mask or experiment configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller passed data that violates an operation's precondition.
    #[error("input error: {0}")]
    Input(String),

    /// A file did not match its declared binary layout.
    #[error("format error in {path} at byte {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    /// Local training produced a non-finite loss.
    #[error("training diverged on client {client} in epoch {epoch}: {message}")]
    Training {
        client: usize,
        epoch: usize,
        message: String,
    },

    /// Broken internal invariant (stale cache, index out of range).
    #[error("internal error: {0}")]
    Internal(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
