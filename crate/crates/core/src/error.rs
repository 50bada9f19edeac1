use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("overlapping groups: index {index} appears in group {first} and group {second}")]
    OverlappingGroups {
        index: usize,
        first: usize,
        second: usize,
    },

    #[error("uncovered index: column {index} belongs to no group")]
    UncoveredIndex { index: usize },

    #[error("index out of range: group {group} lists column {index} but p = {p}")]
    IndexOutOfRange { group: usize, index: usize, p: usize },

    #[error("empty group: group {group} has no members")]
    EmptyGroup { group: usize },

    #[error("nonpositive weight: group {group} has weight {weight}")]
    NonpositiveWeight { group: usize, weight: f64 },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite entry in {what} at {location}")]
    NonFinite { what: &'static str, location: String },

    #[error("problem too small: {0}")]
    TooSmall(String),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("not a permutation of 1..={n}: {reason}")]
    NotAPermutation { n: usize, reason: String },

    #[error("stale Jacobian data: {0}")]
    Stale(String),

    #[error("solver aborted: {0}")]
    Numerical(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
