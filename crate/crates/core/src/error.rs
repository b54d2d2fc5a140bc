use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("unrepresentable word: {0:?}")]
    UnrepresentableWord(String),

    #[error("empty context window")]
    EmptyContext,

    #[error("vocabulary is empty after pruning")]
    EmptyVocab,

    #[error("model is not positional")]
    NotPositional,

    #[error("model file: {field}: {reason}")]
    Format { field: &'static str, reason: String },

    #[error("numeric failure: {0}")]
    NumericFailure(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            context: path.into().display().to_string(),
            source,
        }
    }

    pub(crate) fn format(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            field,
            reason: reason.into(),
        }
    }
}
