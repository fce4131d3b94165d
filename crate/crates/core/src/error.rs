use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("value out of range in {what} at (row {row}, col {col}): {value}")]
    OutOfRange {
        what: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("plane fit failed: {0}")]
    PlaneFit(String),

    #[error("no source frames supplied")]
    NoSources,

    #[error("no valid pixels to evaluate")]
    NoValidPixels,

    #[error("pixel ({row}, {col}) outside {height}x{width} raster")]
    OutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },

    #[error("missing input: {0}")]
    MissingInput(&'static str),

    #[error("malformed {format} header: {reason}")]
    MalformedHeader { format: &'static str, reason: String },

    #[error("truncated {format} payload: expected {expected} bytes, got {actual}")]
    Truncated {
        format: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("unsupported PFM endianness: scale {0} (only little-endian, negative scale, is supported)")]
    UnsupportedEndianness(f32),

    #[error("non-binary PGM value {0} (expected 0 or 255)")]
    NonBinaryPgm(u8),

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
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }
}
