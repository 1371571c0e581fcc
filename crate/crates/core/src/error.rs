use thiserror::Error;

use crate::metrics::Feasibility;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An index or parameter lies outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A numerical precondition (Hermitian, PSD, positive definite) failed.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("infeasible configuration: {0}")]
    Infeasible(Feasibility),

    #[error("covariance solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("refusing to enumerate {count} port selections (limit {limit})")]
    SearchTooLarge { count: u128, limit: u128 },

    #[error("no port selection satisfies the sensing constraint")]
    NoFeasibleSelection,

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
