use thiserror::Error;

/// Errors shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("linear solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    LinearSolve { iterations: usize, residual: f64 },

    #[error("eigen-solver failure: {0}")]
    Eigen(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConverged { iterations: usize, residual: f64 },

    #[error("Newton iteration diverged after {iterations} iterations; residual trace {trace:?}")]
    Diverged { iterations: usize, trace: Vec<f64> },

    #[error("deflation found no new solution within {iterations} iterations")]
    NoNewSolution { iterations: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
