use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid bounding box [{0}, {1}, {2}, {3}]")]
    InvalidBox(f64, f64, f64, f64),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("referential integrity: {0}")]
    Integrity(String),

    #[error("raster error in {path}: {msg}")]
    Raster { path: PathBuf, msg: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("expected {expected} input planes, got {got}")]
    PlaneCount { expected: usize, got: usize },

    #[error("sample {0} is missing its privileged plane")]
    MissingPrivileged(String),

    #[error("sample {0} already carries a privileged plane")]
    PrivilegedPresent(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("usage: {0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// Whether the failure happened while training (as opposed to reading or validating data).
    pub fn is_training_failure(&self) -> bool {
        matches!(self, Error::Training(_))
    }
}
