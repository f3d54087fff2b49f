use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty embedding table")]
    EmptyTable,
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("tag map conflict: fine tag {tag:?} maps to both {first:?} and {second:?}")]
    TagMapConflict { tag: String, first: String, second: String },
    #[error("unmapped tag {0:?}")]
    UnmappedTag(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate lattice: no admissible tag sequence ({0})")]
    DegenerateLattice(String),
    #[error("sentence {index}: {source}")]
    InSentence {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("enumeration refused: {0} sequences exceed the bound")]
    TooLarge(f64),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("model file: {0}")]
    Format(String),
    #[error("configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn in_sentence(self, index: usize) -> Self {
        Error::InSentence {
            index,
            source: Box::new(self),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) => ErrorKind::Config,
            Error::Numerical(_) | Error::DegenerateLattice(_) => ErrorKind::Numerical,
            Error::InSentence { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }
}
