use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the tagbook pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{}:{line}: {message}", path.display())]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("duplicate video id {0:?}")]
    DuplicateId(String),

    #[error("annotation for {0:?} has no feature vector")]
    MissingFeature(String),

    #[error("unknown video {0:?}")]
    UnknownVideo(String),

    #[error("unknown tag {0:?}")]
    UnknownTag(String),

    #[error("no tag reaches the minimum document frequency")]
    EmptyVocabulary,

    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("refine variant requires a refined relevance matrix on the corpus")]
    MissingRefinement,

    #[error("relevance matrix shape {found:?} does not match corpus shape {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("event {0:?}: description contains no vocabulary tag")]
    EmptyModel(String),

    #[error("training data needs both positive and negative samples")]
    DegenerateData,

    #[error("requested size {requested} exceeds the maximum {max}")]
    SizeTooLarge { requested: usize, max: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("ground truth has no positives")]
    NoPositives,

    #[error("reference text has no tokens")]
    EmptyReference,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("query {id:?}: {source}")]
    Query {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("corrupt artifact {}: {message}", path.display())]
    Corrupt { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
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

    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Corrupt {
            path: path.into(),
            message: message.into(),
        }
    }
}
