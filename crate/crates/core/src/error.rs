use thiserror::Error;

use crate::solver::DiscreteSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("numeric failure in element {element}: {what}")]
    NumericFailure { element: usize, what: String },

    #[error("precondition failed: {0}")]
    PreconditionFailure(String),

    #[error("oracle failure: {0}")]
    OracleFailure(String),

    /// A time step did not converge; the states computed so far are kept.
    #[error("solve failed at step {step}: {reason}")]
    SolveFailure {
        step: usize,
        reason: String,
        partial: Box<DiscreteSolution>,
    },
}

impl Error {
    pub(crate) fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn invalid_data(msg: impl Into<String>) -> Self {
        Error::InvalidData(msg.into())
    }

    pub(crate) fn numeric(element: usize, what: impl Into<String>) -> Self {
        Error::NumericFailure {
            element,
            what: what.into(),
        }
    }
}
