use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GblendError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{what}: {msg}")]
    Format { what: String, msg: String },
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error(transparent)]
    Core(#[from] gblend_core::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GblendError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> GblendError {
    let path = path.into();
    move |source| GblendError::Io { path, source }
}

pub(crate) fn format_err(what: impl Into<String>, msg: impl Into<String>) -> GblendError {
    GblendError::Format { what: what.into(), msg: msg.into() }
}
