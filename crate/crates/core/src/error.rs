use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (channel counts, shapes).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Tile or crop offsets that would shift the 2x2 filter-array phase.
    #[error("phase violation: {0}")]
    PhaseViolation(String),

    #[error("invalid pattern `{input}`: {reason}")]
    Pattern { input: String, reason: String },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("truncated data: {0}")]
    Truncated(String),

    /// Weight file whose declared configuration disagrees with its layers.
    #[error("weight file inconsistent with declared configuration: {0}")]
    Inconsistent(String),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("image of {width}x{height} exceeds the sample budget of {limit} samples")]
    DimensionOverflow { width: usize, height: usize, limit: usize },

    #[error("malformed header: {0}")]
    Header(String),

    #[error("scene `{scene}`: {message}")]
    Manifest { scene: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("png encoding failed: {0}")]
    Png(String),

    /// Non-finite loss or activations during training.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("estimated working set of {required} bytes exceeds budget of {budget} bytes; {suggestion}")]
    InsufficientMemory {
        required: usize,
        budget: usize,
        suggestion: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
