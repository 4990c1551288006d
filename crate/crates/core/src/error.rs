use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate utterance id `{0}`")]
    DuplicateId(String),

    #[error("empty label set for utterance `{0}`")]
    EmptyLabelSet(String),

    #[error("empty text for utterance `{0}`")]
    EmptyText(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("invalid split ratios {0:?}: must be positive and sum to 1")]
    InvalidRatios((f64, f64, f64)),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("empty memory or support set")]
    EmptySupport,

    #[error("training set of {size} samples is too small for batch size {batch_size}")]
    TrainingSetTooSmall { size: usize, batch_size: usize },

    #[error("duplicate prediction `{0}`")]
    DuplicatePrediction(usize),

    #[error("model returned {got} apps, need {need}")]
    TooFewPredictions { got: usize, need: usize },

    #[error("one-shot split: {0}")]
    Split(String),

    #[error("threshold prediction requires sigmoid output mode")]
    WrongOutputMode,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("all {0} restarts diverged")]
    AllRestartsDiverged(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
