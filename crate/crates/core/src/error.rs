use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} index {index} out of range (bound {bound})")]
    Index {
        what: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("linear system is singular (pivot {pivot:e} at column {column})")]
    Singular { column: usize, pivot: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("zero-probability event: {0}")]
    ZeroProbability(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("inconsistent decision: {0}")]
    InconsistentDecision(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn check_index(what: &'static str, index: usize, bound: usize) -> Result<()> {
        if index < bound {
            Ok(())
        } else {
            Err(Error::Index { what, index, bound })
        }
    }
}
