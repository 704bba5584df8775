use std::path::PathBuf;

use thiserror::Error;

use crate::generate::GeneratorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("parse error at offset {offset}: {message}")]
    Tree { offset: usize, message: String },

    #[error("invalid rule: {0}")]
    Rule(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("more summary sentences than turns ({sentences} > {turns})")]
    TooManySentences { sentences: usize, turns: usize },

    #[error("invalid segment bounds ({start}, {end}) for {n_turns} turns")]
    SegmentBounds { start: usize, end: usize, n_turns: usize },

    #[error("invalid segmentation: {0}")]
    Segmentation(String),

    #[error("requested {k} segments for a dialogue of {n_turns} turns")]
    SegmentCount { k: usize, n_turns: usize },

    #[error("feature dimension mismatch: model has {model}, features have {features}")]
    Dimension { model: usize, features: usize },

    #[error("invalid training config: {0}")]
    TrainConfig(String),

    #[error("empty training set")]
    EmptyDataset,

    #[error("dialogue has no tokens")]
    EmptyDialogue,

    #[error("sample {0} has no reference summary")]
    MissingSummary(String),

    #[error("generator failed on segment {segment}: {source}")]
    Generator {
        segment: usize,
        #[source]
        source: GeneratorError,
    },

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
