use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulator configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot place balls: {n_balls} balls did not fit after {attempts} attempts")]
    Placement { n_balls: usize, attempts: usize },
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("sequence {index} of split {split}: {source}")]
    Simulation {
        split: String,
        index: usize,
        #[source]
        source: SimError,
    },
    #[error("invalid dataset request: {0}")]
    Invalid(String),
    #[error("unrecognized format in {0}")]
    UnrecognizedFormat(PathBuf),
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("truncated file {path}: expected {expected} bytes, found {found}")]
    Truncated { path: PathBuf, expected: u64, found: u64 },
    #[error("shape mismatch in {path}: {detail}")]
    ShapeMismatch { path: PathBuf, detail: String },
    #[error("malformed manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("dynamics diverged at t = {time}")]
    Diverged { time: f64 },
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("architecture mismatch: {0}")]
    Architecture(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}; last good checkpoint: {last_good:?}")]
    Diverged {
        epoch: usize,
        batch: usize,
        last_good: Option<PathBuf>,
    },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid metrics configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}
