use thiserror::Error;

/// Errors produced by the solvers and problem constructors.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An iterative solver ran out of iterations. `best` is the best iterate
    /// seen and `measure` its stopping quantity (residual or gap).
    #[error("{solver}: budget of {iterations} iterations exhausted (best {measure:e})")]
    BudgetExceeded {
        solver: &'static str,
        iterations: usize,
        best: Vec<f64>,
        measure: f64,
    },

    #[error("PNG constraint system is infeasible: {0}")]
    Infeasible(String),

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
