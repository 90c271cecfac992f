use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the positioning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Load {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("duplicate observation for fp_id={fp_id}, mac={mac:?}")]
    DuplicateObservation { fp_id: u64, mac: String },

    #[error("duplicate fingerprint fp_id={0}")]
    DuplicateFingerprint(u64),

    #[error("observation references unknown fp_id={0}")]
    OrphanObservation(u64),

    #[error("fingerprint fp_id={0} has no observations")]
    EmptyFingerprint(u64),

    #[error("need at least {required} fingerprints, got {actual}")]
    TooFewFingerprints { required: usize, actual: usize },

    #[error("need at least {required} neighbor candidates, got {available}")]
    InsufficientCandidates { required: usize, available: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("training failed: {0}")]
    TrainingFailed(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("radio map generation: {0}")]
    Generation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
