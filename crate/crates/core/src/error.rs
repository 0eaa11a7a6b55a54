use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("label column must contain only classes 0 and 1; class {0} has fewer than 2 records")]
    ClassTooSmall(u8),

    #[error("training labels contain a single class")]
    SingleClass,

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("embedding cache {path}: {reason}")]
    Cache { path: PathBuf, reason: String },

    #[error("embedding provider: {0}")]
    Provider(#[from] ProviderError),

    #[error("embedding batch covering records {first}..={last} failed: {source}")]
    Batch {
        first: String,
        last: String,
        #[source]
        source: ProviderError,
    },

    #[error("model envelope: {0}")]
    Envelope(String),

    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u64),

    #[error("invalid t-SNE configuration: {0}")]
    Tsne(String),

    #[error("data has zero variance")]
    ZeroVariance,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failures reported by an embedding provider.
#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("missing API key: environment variable {0} is not set")]
    MissingApiKey(String),

    #[error("empty text at position {0}")]
    EmptyText(usize),

    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },

    #[error("HTTP {status} after {attempts} attempts: {body}")]
    Status {
        status: u16,
        attempts: u32,
        body: String,
    },

    #[error("malformed response: {0}")]
    Response(String),

    #[error("dimension mismatch in batch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
}
