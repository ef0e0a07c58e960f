use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller violated a precondition (dimension mismatch, k too large, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// A vector file could not be ingested.
    #[error("ingestion error at record {record}: {reason}")]
    Ingest { record: usize, reason: String },

    /// A serialized index or cache file is malformed.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
