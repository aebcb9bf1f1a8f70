use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FtnError {
    /// Shapes, hyperparameters or config values that cannot describe a valid run.
    #[error("configuration error: {0}")]
    Config(String),

    /// An API was called out of order or on the wrong kind of object.
    #[error("usage error: {0}")]
    Usage(String),

    /// Targets or samples inconsistent with the loss or model.
    #[error("data error: {0}")]
    Data(String),

    #[error("ingestion error in {}: at byte offset {offset}: {message}", path.display())]
    Ingestion { path: PathBuf, offset: u64, message: String },

    #[error("fetch error for {url}: {message}")]
    Fetch { url: String, message: String },

    #[error("integrity error: {} has digest {actual}, expected {expected}", path.display())]
    Integrity { path: PathBuf, expected: String, actual: String },

    #[error("mask capacity exhausted: task {task} needs slots up to {needed} but the grid has {available}")]
    Capacity { task: usize, needed: usize, available: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, FtnError>;

impl From<serde_json::Error> for FtnError {
    fn from(e: serde_json::Error) -> Self {
        FtnError::Serde(e.to_string())
    }
}
