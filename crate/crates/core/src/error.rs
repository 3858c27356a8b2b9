use thiserror::Error;

/// Errors raised by mesh construction, discretization, and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("unsupported quadrature order {0} (supported: 1..=10)")]
    UnsupportedOrder(usize),

    #[error("reconstruction basis is singular: {0}")]
    SingularBasis(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("line search failed at Newton iteration {iteration} (residual {residual:.3e})")]
    LineSearch { iteration: usize, residual: f64 },

    #[error("optimizer stagnated after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    OptimizerStagnated { iterations: usize, gradient_norm: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
