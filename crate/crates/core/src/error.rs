use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid note #{index}: {reason}")]
    InvalidNote { index: usize, reason: String },

    #[error("value {value} outside of domain [{lo}, {hi}{close}", close = if *closed { "]" } else { ")" })]
    OutOfDomain {
        value: f64,
        lo: f64,
        hi: f64,
        closed: bool,
    },

    #[error("duration mismatch: {0} vs {1}")]
    DurationMismatch(f64, f64),

    #[error("pitch count mismatch: {0} vs {1}")]
    PitchCountMismatch(usize, usize),

    #[error("invalid alignment: {0}")]
    InvalidAlignment(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("score has no onset after position 0")]
    NoOnsets,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("wrong feature kind: expected {expected}, got {got}")]
    WrongFeatureKind {
        expected: &'static str,
        got: &'static str,
    },

    #[error("input too short: {len} samples, need at least {needed}")]
    TooShort { len: usize, needed: usize },

    #[error("midi: {0}")]
    Midi(String),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("malformed alignment document: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
