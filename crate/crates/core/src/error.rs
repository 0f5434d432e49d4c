use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("campaign contains no records")]
    EmptyCampaign,

    #[error("duplicate experiment id `{0}`")]
    DuplicateExperimentId(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("event type `{0}` is not in the alphabet")]
    UnknownEventType(String),

    #[error("symbol `{0}` is outside the model alphabet")]
    UnknownSymbol(String),

    #[error("invalid feature weights: {0}")]
    InvalidWeights(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("too few points: n = {n} < k = {k}")]
    TooFewPoints { n: usize, k: usize },

    #[error("input contains non-finite values")]
    NonFiniteInput,

    #[error("invalid layer dimensions: {0}")]
    InvalidDims(String),

    #[error("loss became non-finite at step {step} ({phase})")]
    NonFiniteLoss { phase: String, step: usize },

    #[error("soft cluster {cluster} is empty (frequency {frequency:e}); restart with another seed")]
    DegenerateCluster { cluster: usize, frequency: f64 },

    #[error("no ground-truth label for {} experiment(s): {}", .0.len(), .0.join(", "))]
    MissingGroundTruth(Vec<String>),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
