use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("labels contain a single class")]
    SingleClass,

    #[error("feature `{feature}` has no observed value in the training set")]
    AllMissing { feature: &'static str },

    #[error("non-finite value in column {column}, row {row}")]
    NonFinite { row: usize, column: usize },

    #[error("dimension mismatch: expected {expected} columns, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("popularity index reports {popularity} users for common router {bssid}")]
    IndexInconsistency { bssid: String, popularity: usize },

    #[error("requested {requested} samples from a population of {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("a class has {class_count} samples, fewer than the {folds} folds")]
    FoldTooSmall { class_count: usize, folds: usize },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
