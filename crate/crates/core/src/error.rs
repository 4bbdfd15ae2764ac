//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by linear algebra, model construction, estimation and the
/// experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand dimensions are incompatible.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The Jacobi eigensolver did not reach its convergence threshold.
    #[error("eigensolver failed to converge: off-diagonal residual {residual:.3e} after {sweeps} sweeps")]
    EigNonConvergence { residual: f64, sweeps: usize },

    /// Exhaustive support enumeration would exceed the configured budget.
    #[error("enumeration over {required} supports exceeds budget {budget}; use the truncated power method instead")]
    EnumerationBudget { required: u128, budget: u128 },

    /// A pattern cannot produce a vector inside the requested lq ball.
    #[error("infeasible pattern: {0}")]
    InfeasiblePattern(String),

    /// Iterate collapsed to zero; no feasible ascent direction.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Randomized packing construction failed to reach its cardinality target.
    #[error("packing construction failed: {0}")]
    ConstructionFailure(String),

    /// A query lies outside the regime where the formula is defined.
    #[error("out of regime: {0}")]
    OutOfRegime(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
