use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid: {0}")]
    InvalidGrid(String),

    #[error("{context}: index {index} out of range 1..={max}")]
    IndexOutOfRange { context: &'static str, index: usize, max: usize },

    #[error("physics: {0}")]
    InvalidParameter(String),

    #[error("{context}: dimension mismatch (expected {expected}, got {got})")]
    DimensionMismatch { context: &'static str, expected: usize, got: usize },

    #[error("{context}: requires {expected} coupling")]
    WrongCoupling { context: &'static str, expected: &'static str },

    #[error("analysis: {what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("analysis: linear part is not dissipative (log-norm {mu:e} >= 0)")]
    NotDissipative { mu: f64 },

    #[error("analysis: rescaling infeasible: {0}")]
    InfeasibleRescaling(String),

    #[error("analysis: {0}")]
    InvalidPermutation(String),

    #[error("{context}: size {size} exceeds budget {budget}")]
    BudgetExceeded { context: &'static str, size: usize, budget: usize },

    #[error("{context}: non-finite value at step {step}")]
    NonFinite { context: &'static str, step: usize },

    #[error("{0}")]
    Precondition(String),
}
