use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the fit / evaluate / benchmark pipeline.
#[derive(Debug, Error)]
pub enum CubtError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("node index set is empty")]
    EmptyNode,
    #[error("node has fewer than two observations, nothing to split")]
    SingletonNode,
    #[error("index sets overlap (row {0} appears in both)")]
    Overlap(usize),
    #[error("index {index} out of range for a dataset of {n} rows")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("tree is at stage {found}, expected {expected}")]
    Stage {
        expected: &'static str,
        found: &'static str,
    },
    #[error("requested k = {k} clusters but the tree only has {leaves} leaves; lower mindev or minsize (the fallback grower does this automatically)")]
    KTooLarge { k: usize, leaves: usize },
    #[error("dissimilarity table is empty")]
    EmptyTable,
    #[error("k = {k} is out of range for {n} observations")]
    KOutOfRange { k: usize, n: usize },
    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("label sequence is empty")]
    EmptyLabels,
    #[error("unknown model `{0}` (expected M1, M2, M3, M4 or CARTCMP)")]
    UnknownModel(String),
    #[error("invalid sigma {0}: must be positive and finite")]
    BadSigma(f64),
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("dimension mismatch: expected {expected} columns, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CubtError {
    /// True for problems with user-supplied input files or values.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            CubtError::EmptyDataset
                | CubtError::Parse { .. }
                | CubtError::Dimension { .. }
                | CubtError::InvalidData(_)
                | CubtError::LengthMismatch(..)
                | CubtError::EmptyLabels
                | CubtError::File { .. }
                | CubtError::Io(_)
                | CubtError::Json(_)
                | CubtError::Csv(_)
                | CubtError::KTooLarge { .. }
                | CubtError::KOutOfRange { .. }
        )
    }

    /// True for invalid parameter combinations (a usage problem).
    pub fn is_usage_error(&self) -> bool {
        matches!(
            self,
            CubtError::InvalidParams(_) | CubtError::UnknownModel(_) | CubtError::BadSigma(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, CubtError>;
