use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Input,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("sample {id:?}: feature has {found} values, corpus declares {expected}")]
    FeatureLength { id: String, expected: usize, found: usize },

    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),

    #[error("no word reaches min_count {0}")]
    EmptyVocabulary(usize),

    #[error("class {0} has no samples")]
    MissingClass(&'static str),

    #[error("word {0:?} is not in the vocabulary")]
    UnknownWord(String),

    #[error("sample id {0:?} is not indexed")]
    UnknownId(String),

    #[error("source {0:?} not found")]
    UnknownSource(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("document has no in-vocabulary tokens")]
    NoInVocabularyTokens,

    #[error("no document embedding for sample {0:?}")]
    MissingEmbedding(String),

    #[error("model has no stage-2 head")]
    StageTwoAbsent,

    #[error("model has no word head")]
    WordHeadAbsent,

    #[error("{0}")]
    InvalidArgument(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("non-finite value during {0}")]
    NonFinite(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) => ErrorKind::Usage,
            Error::NonFinite(_) => ErrorKind::Numeric,
            _ => ErrorKind::Input,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
