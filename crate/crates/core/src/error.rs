use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed PCD header at line {line}: {message}")]
    PcdHeader { line: usize, message: String },

    #[error("malformed PCD data: {0}")]
    PcdData(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown preset `{name}`; available presets: {available}")]
    UnknownPreset { name: String, available: String },

    #[error("ground truth has no {0} points")]
    MissingClass(&'static str),
}

impl Error {
    pub(crate) fn with_path(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}
