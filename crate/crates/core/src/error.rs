use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("tree syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("origin has no direction")]
    Origin,

    #[error("point lies outside the unit sphere body: {0}")]
    OutsideSphere(String),

    #[error("point lies on the boundary of the coordinate chart")]
    Boundary,

    #[error("singular input: {0}")]
    Singular(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error stems from malformed or inconsistent input (as
    /// opposed to a numerical failure during computation).
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Numeric(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
