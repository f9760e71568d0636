use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong across the pipeline.
///
/// The CLI maps any of these to exit code 2 (data error); usage errors are
/// handled by the argument parser and exit with 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("duplicate column name {0:?} in header")]
    DuplicateColumn(String),
    #[error("duplicate instance id {0:?}")]
    DuplicateId(String),
    #[error("column {0:?} not found")]
    UnknownColumn(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("binning cannot be applied: {0}")]
    BinningMismatch(String),
    #[error("variable {variable:?}: {message}")]
    Variable { variable: String, message: String },
    #[error("model does not belong to these stats: {0}")]
    ModelMismatch(String),
    #[error(
        "exhaustive search space too large: Bell({v})*Bell({w}) exceeds 10^6 partition pairs"
    )]
    SearchSpaceTooLarge { v: usize, w: usize },
    #[error("partitions cover different item sets ({only_a} items only in first, {only_b} only in second)")]
    ItemSetMismatch { only_a: usize, only_b: usize },
    #[error("mutual information of the confusion matrix is zero; retained fraction undefined")]
    DegenerateMi,
    #[error("eigensolver failed: {0}")]
    Eigen(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
