use std::io;

use thiserror::Error;

/// Errors produced by the retrieval engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    /// The byte stream does not follow the VEMB layout.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// The file parsed but its contents contradict each other.
    #[error("corrupt corpus: {0}")]
    CorruptCorpus(String),

    /// Embeddings, metadata, plans or candidate lists disagree.
    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("index contains no slices after filtering")]
    EmptyIndex,

    #[error("query error: {0}")]
    Query(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("report error: {0}")]
    Report(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    /// True when the error stems from bad input rather than a runtime failure.
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            Error::Format { .. }
                | Error::CorruptCorpus(_)
                | Error::Consistency(_)
                | Error::InvalidSpec(_)
                | Error::Input(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
