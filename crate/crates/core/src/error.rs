use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("FastICA did not converge for any of {requested} sources (iterations: {iterations:?})")]
    NoConvergence {
        requested: usize,
        iterations: Vec<usize>,
    },

    #[error("decomposition produced no usable motor units: {0}")]
    EmptyDecomposition(String),
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parameter(_) => ErrorKind::Config,
            Error::Shape(_)
            | Error::EmptyDataset(_)
            | Error::InsufficientData(_)
            | Error::EmptyDecomposition(_) => ErrorKind::Data,
            Error::Numerical(_) | Error::NoConvergence { .. } => ErrorKind::Numerical,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
