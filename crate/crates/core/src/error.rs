use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: duplicate word {word:?}")]
    DuplicateWord {
        path: PathBuf,
        line: usize,
        word: String,
    },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("vector is not unit length (norm {0})")]
    NotUnit(f64),

    #[error("empty context")]
    EmptyContext,

    #[error("word {0:?} is not in the vocabulary")]
    NotInVocabulary(String),

    #[error("no frequency data loaded; supply a frequency sidecar file")]
    NoFrequencies,

    #[error("not enough candidates: need {needed}, have {available}")]
    NotEnoughCandidates { needed: usize, available: usize },

    #[error("best-permutation accuracy supports at most 8 predicted clusters, got {0}; use an approximate matching instead")]
    TooManyClusters(usize),

    #[error("no lexeme vector for {word}#{sense}")]
    MissingLexeme { word: String, sense: usize },

    #[error("no sense model for {0:?}")]
    MissingModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
