use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{context}: expected dimension {expected}, found {found}")]
    Dimension {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("{context}: non-finite value")]
    NonFinite { context: String },

    #[error("{path}:{line}: {message}")]
    MalformedRow { path: String, line: usize, message: String },

    #[error("duplicate video id `{0}`")]
    DuplicateId(String),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("length mismatch: {0}")]
    Length(String),

    #[error("roc auc needs both positive and negative frames")]
    SingleClass,

    #[error("video `{0}` has no frame ground truth")]
    MissingGroundTruth(String),

    #[error("invalid raw clip file: {0}")]
    RawClip(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
