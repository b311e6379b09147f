use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration value.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A NaN or infinity reached a place where only finite values are allowed.
    #[error("non-finite value in {context} (layer {layer})")]
    NonFinite { context: String, layer: usize },

    /// Training diverged or an update had to be aborted.
    #[error("training failure: {0}")]
    Training(String),

    /// Checkpoint written by an incompatible format version.
    #[error("incompatible checkpoint format version {found} (expected {expected})")]
    IncompatibleVersion { found: u32, expected: u32 },

    /// Checkpoint is truncated, corrupted or otherwise unreadable.
    #[error("checkpoint integrity error: {0}")]
    Integrity(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
