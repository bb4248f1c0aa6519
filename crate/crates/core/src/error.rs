use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum DdlError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("gradient error: {0}")]
    Gradient(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("phantom generation failed: {0}")]
    Phantom(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DdlError>;

impl DdlError {
    pub fn io(path: impl std::fmt::Display, source: std::io::Error) -> Self {
        DdlError::Io {
            path: path.to_string(),
            source,
        }
    }
}
