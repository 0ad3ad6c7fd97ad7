use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the inference engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("empty dataset after preprocessing ({languages} languages, {features} features)")]
    EmptyDataset { languages: usize, features: usize },

    #[error("state space of {size} exceeds the enumeration limit of {limit}")]
    StateSpaceOverflow { size: u128, limit: u128 },

    #[error("clusterings cover different universes ({left} vs {right} items)")]
    UniverseMismatch { left: usize, right: usize },

    #[error("newick: {0}")]
    Newick(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
