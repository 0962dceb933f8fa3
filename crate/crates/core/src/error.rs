use thiserror::Error;

/// Errors raised by the fidelity-estimation library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The data cannot support the requested estimate (zero totals, empty rows).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// A reference count needed for renormalization is zero.
    #[error("degenerate reference counts: block {block} has D = 0")]
    DegenerateReference { block: String },

    /// An internal consistency check failed (e.g. lost Hermiticity).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A file could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by data that cannot support an estimate.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::DegenerateData(_) | Error::DegenerateReference { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
