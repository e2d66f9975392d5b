use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the simulator, circuit builder, data loader and trainer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit index {index} out of range for a {n_qubits}-qubit register")]
    QubitOutOfRange { index: usize, n_qubits: usize },

    #[error("parameter index {index} out of range (parameter vector has {len} entries)")]
    UnboundParameter { index: usize, len: usize },

    #[error("gate needs input component {index} but only {len} inputs were bound")]
    UnboundInput { index: usize, len: usize },

    #[error("invalid gate: {0}")]
    InvalidGate(String),

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("molecule `{id}`: {message}")]
    Schema { id: String, message: String },

    #[error("split leaves an empty partition ({train} train / {test} test)")]
    EmptyPartition { train: usize, test: usize },

    #[error("R² score is undefined: {0}")]
    UndefinedScore(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("parameter count mismatch: expected {expected}, built {got}")]
    ParamCountMismatch { expected: usize, got: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed fixture: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
