use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("pnm parse error at byte {offset}: {message}")]
    Pnm { offset: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("manifest line {line}: dimensions {found} differ from {expected}")]
    DimensionMismatch {
        line: usize,
        expected: String,
        found: String,
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("class id {id} at pixel (row {row}, col {col}) is out of range for {classes} classes")]
    ClassOutOfRange {
        row: usize,
        col: usize,
        id: u8,
        classes: usize,
    },

    #[error("mIoU undefined: no class has a nonzero union")]
    UndefinedMiou,

    #[error("solver aborted: {0}")]
    SolverAbort(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
