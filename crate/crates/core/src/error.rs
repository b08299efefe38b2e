use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification of an [`Error`], used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad parameters, configuration or usage.
    Config,
    /// Unreadable or malformed input data.
    Data,
    /// Training produced a non-finite loss.
    Diverged,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {op} got {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("sentence of length {len} is shorter than window {window}")]
    SentenceTooShort { len: usize, window: usize },

    #[error("sentence is empty after tokenization")]
    EmptySentence,

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("label index {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: malformed line: {msg}")]
    MalformedLine { line: usize, msg: String },

    #[error("unexpected end of file while reading record {record}")]
    UnexpectedEof { record: usize },

    #[error("bad header: {0}")]
    Header(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("test label `{0}` does not occur in the training data")]
    UnknownLabel(String),

    #[error("label catalogs differ between model and dataset")]
    CatalogMismatch,

    #[error("trace does not belong to a {0} model")]
    TraceMismatch(&'static str),

    #[error("training diverged: non-finite loss at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Diverged { .. } => ErrorKind::Diverged,
            Error::Param(_) | Error::Config(_) => ErrorKind::Config,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
