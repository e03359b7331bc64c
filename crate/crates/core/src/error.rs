use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or mismatched inputs (dimensions, channel counts, empty lists).
    #[error("input error: {0}")]
    Input(String),

    /// A genotype gene lies outside its legal range.
    #[error("invalid genotype at row {row}, column {col}: {reason}")]
    Validity {
        row: usize,
        col: usize,
        reason: String,
    },

    #[error("invalid genotype shape: {0}")]
    Shape(String),

    #[error("mutation did not change the active graph after {rounds} rounds")]
    MutationStalled { rounds: usize },

    #[error("library hash mismatch: model expects {expected}, library is {actual}")]
    LibraryMismatch { expected: String, actual: String },

    #[error("unsupported model schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("failed to load dataset entry {entry}: {reason}")]
    DatasetEntry { entry: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: ::image::ImageError,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
