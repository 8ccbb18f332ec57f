use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = PalaceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PalaceError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid address field `{field}`: {value:?} must match [a-z0-9_]+")]
    AddressInvalid { field: &'static str, value: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("embedding error: {0}")]
    Embedding(String),

    #[error("fixture error: {0}")]
    Fixture(String),

    #[error("corrupt index file {path}: {message}")]
    CorruptIndex { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PalaceError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        PalaceError::InvalidInput(msg.into())
    }

    /// True for errors caused by the caller (bad arguments, missing palace)
    /// rather than by the engine or the filesystem.
    pub fn is_user_error(&self) -> bool {
        !matches!(
            self,
            PalaceError::Io(_) | PalaceError::CorruptIndex { .. } | PalaceError::Embedding(_)
        )
    }
}
