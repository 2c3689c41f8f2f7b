use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("gradient tape is stale: parameters changed since the forward pass")]
    StaleTape,
    #[error("invalid depth range: near {near} must be below far {far}")]
    InvalidRange { near: f64, far: f64 },
    #[error("sampled direction is degenerate")]
    DegenerateDirection,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("pixel ({px}, {py}) is outside a {width}x{height} frame")]
    OutOfFrame { px: usize, py: usize, width: usize, height: usize },
    #[error("operation requires the {expected} variant, model is {actual}")]
    VariantMismatch { expected: &'static str, actual: &'static str },
    #[error("attribute {index} = {value} is outside [-1, 1]")]
    AttributeOutOfRange { index: usize, value: f64 },
    #[error("attribute arity mismatch: model has {model}, data has {data}")]
    ArityMismatch { model: usize, data: usize },
    #[error("training diverged at iteration {iter}: loss is not finite")]
    Diverged { iter: usize },
    #[error("image too small: {width}x{height}, need at least {min} pixels per side")]
    TooSmall { width: usize, height: usize, min: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed file {path:?}: {reason}")]
    MalformedFile { path: Option<PathBuf>, reason: String },
    #[error("unknown scene {0:?}")]
    UnknownScene(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn malformed(reason: impl Into<String>) -> Self {
        Error::MalformedFile { path: None, reason: reason.into() }
    }

    pub fn with_path(self, path: &std::path::Path) -> Self {
        match self {
            Error::MalformedFile { path: None, reason } => Error::MalformedFile {
                path: Some(path.to_path_buf()),
                reason,
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
