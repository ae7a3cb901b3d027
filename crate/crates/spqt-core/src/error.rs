//! Error type shared by every module in the crate.

use std::path::PathBuf;

/// Everything that can go wrong in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A file or text payload does not match the expected layout
    /// (bad magic, ragged CSV rows, unsorted input, ...).
    #[error("format error: {0}")]
    Format(String),

    /// A file declares more data than it contains.
    #[error("truncated input: {0}")]
    Truncation(String),

    /// Values are syntactically readable but semantically invalid
    /// (non-finite entries, unparsable cells, unsorted spectra).
    #[error("data error: {0}")]
    Data(String),

    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Matrix dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An index is outside its admissible range.
    #[error("index out of range: {0}")]
    Index(String),

    /// An experiment configuration is internally inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// I/O failure, with the offending path attached.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
