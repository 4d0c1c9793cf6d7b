use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("duplicate contig id '{0}'")]
    DuplicateContig(String),

    #[error("unknown contig id '{0}'")]
    UnknownContig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot featurize contig '{0}': no window of definite bases")]
    Unfeaturizable(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid file format: {0}")]
    Format(String),

    #[error("no taxonomy entry for genome '{0}'")]
    MissingTaxonomy(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::Degenerate(_))
    }
}
