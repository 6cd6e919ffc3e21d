//! Error type shared by all modules of the crate.

/// Errors produced by quadrature construction, node solvers, sweeps and
/// diagnostics.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("factorization failed: {0}")]
    Factorization(String),

    /// An iterative solver stopped before reaching its tolerance. `context`
    /// names the solver and, where applicable, the collocation node or
    /// algorithm step it was working on.
    #[error("solver failure in {context}: residual {residual:.3e} after {iterations} iterations")]
    SolverFailure {
        context: String,
        residual: f64,
        iterations: usize,
    },

    /// The sweep-to-sweep defect grew repeatedly; the step size is too large
    /// for the iteration to contract.
    #[error("iteration diverged at sweep {sweep}: defect norm {norm:.3e}")]
    Diverged { sweep: usize, norm: f64 },

    #[error("requested accuracy {requested:.3e} not reached, achieved estimate {achieved:.3e}")]
    AccuracyNotReached { requested: f64, achieved: f64 },

    #[error("insufficient data: needed {needed} usable points, got {actual}")]
    InsufficientData { needed: usize, actual: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
