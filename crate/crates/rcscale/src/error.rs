use thiserror::Error;

/// Errors surfaced by instance construction, linear algebra, and I/O.
#[derive(Debug, Error)]
pub enum ScaleError {
    #[error("row {0} has no positive entry")]
    EmptyRow(usize),

    #[error("entry ({row}, {col}) is negative: {value}")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("marginal sums differ: sum(r) = {r_sum}, sum(c) = {c_sum}")]
    MarginalMismatch { r_sum: u64, c_sum: u64 },

    #[error("zero marginal at index {0}; targets must be positive integers")]
    ZeroMarginal(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("dense Hessian of order {n} exceeds the configured cap {cap}; use hessian_apply")]
    MemoryBudget { n: usize, cap: usize },

    #[error("linear solve did not converge within {0} iterations")]
    NotConverged(usize),

    #[error("instance is not asymptotically (r,c)-scalable")]
    Infeasible,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, ScaleError>;
