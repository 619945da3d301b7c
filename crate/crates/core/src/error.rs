use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numeric consistency check failed: {0}")]
    NumericConsistency(String),

    /// A constant series has no normal form. The mean is kept so callers can
    /// still store `(mean, 0)` if they want to.
    #[error("degenerate series{}: standard deviation is zero (mean {mean})", id.as_deref().map(|i| format!(" '{i}'")).unwrap_or_default())]
    DegenerateSeries { id: Option<String>, mean: f64 },

    #[error("transformation '{name}' is not safe for the polar feature space (additive term must be zero)")]
    UnsafeTransformation { name: String },

    #[error("unknown transformation '{0}'")]
    UnknownTransform(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("duplicate series id '{0}'")]
    DuplicateId(String),

    #[error("rows with unequal length: {rows:?} (expected {expected} values)")]
    RaggedRows { rows: Vec<usize>, expected: usize },

    #[error("not an index snapshot (bad magic bytes)")]
    BadMagic,

    #[error("unsupported snapshot version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("snapshot checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("snapshot truncated: {0}")]
    Truncated(String),

    #[error("snapshot is malformed: {0}")]
    Corrupt(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
