use thiserror::Error;

use crate::lp::RowId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no (N, k) budget satisfies beta: even k = 0 gives log10(beta) = {log_beta:.4}")]
    NoFeasibleBudget { log_beta: f64 },

    #[error("malformed model: {0}")]
    MalformedModel(String),

    #[error("unknown row id {0:?}")]
    UnknownRow(RowId),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("simplex iteration limit reached after {0} iterations")]
    IterationLimit(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("matrix is not positive semidefinite (pivot {index}: {value:e})")]
    NotPositiveSemidefinite { index: usize, value: f64 },

    #[error("problem is infeasible")]
    Infeasible,

    #[error("problem is unbounded")]
    Unbounded,

    #[error("time limit exceeded")]
    TimeLimit,

    #[error("{0} needs dual values and is not available on integer masters")]
    UnsupportedForMip(&'static str),

    #[error("column {0} already carries a semi-continuous restriction")]
    OverlappingSemiContinuous(usize),

    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}
