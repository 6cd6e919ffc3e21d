//! Initial value problems `u' = f(u)` and their node solvers.
//!
//! Every problem provides the right-hand side, a Jacobian action for Newton
//! iterations, and a solver for the implicit node equation
//! `u - a f(u) = b` that arises from lower-triangular preconditioners.

mod allen_cahn;
mod auzinger;
mod fixtures;
mod heat;

pub use allen_cahn::AllenCahn2dProblem;
pub use auzinger::AuzingerProblem;
pub use fixtures::{DahlquistProblem, ZeroProblem};
pub use heat::Heat1dProblem;

use crate::error::Result;
use crate::linalg::Mat;

/// Shared Newton iteration cap for the implicit node solvers.
pub const DEFAULT_MAX_NEWTON: usize = 50;

/// An autonomous initial value problem `u' = f(u)` on `R^N`.
///
/// Implementations are immutable after construction and reentrant, so study
/// cells may evaluate them concurrently.
pub trait IvpProblem: Send + Sync {
    /// Number of degrees of freedom `N`.
    fn dimension(&self) -> usize;

    /// The canonical initial value `u0`.
    fn initial_value(&self) -> Vec<f64>;

    /// Right-hand side evaluation `f(u)`.
    fn eval_f(&self, u: &[f64]) -> Result<Vec<f64>>;

    /// Jacobian action `f'(u) v`, used by Newton solvers and verified against
    /// finite differences in the test suite.
    fn apply_jacobian(&self, u: &[f64], v: &[f64]) -> Result<Vec<f64>>;

    /// Solves `u - a f(u) = b` to `max-norm` residual `tol`.
    ///
    /// `a = 0` returns `b` exactly. `max_iter` caps the Newton iteration for
    /// nonlinear problems; direct solvers ignore it.
    fn solve_node_implicit(
        &self,
        a: f64,
        b: &[f64],
        guess: &[f64],
        tol: f64,
        max_iter: usize,
    ) -> Result<Vec<f64>>;

    /// Analytic solution at time `t` for the canonical initial value, when
    /// one is known.
    fn exact_solution(&self, _t: f64) -> Option<Vec<f64>> {
        None
    }

    /// For linear right-hand sides `f(u) = A u`, the dense matrix `A`.
    /// Enables the direct collocation solve.
    fn linear_part(&self) -> Option<Mat> {
        None
    }
}

/// Residual `u - a f(u) - b` in the maximum norm; the convergence quantity
/// of the node solvers.
pub(crate) fn node_residual_inf(
    problem: &dyn IvpProblem,
    a: f64,
    b: &[f64],
    u: &[f64],
) -> Result<f64> {
    let f = problem.eval_f(u)?;
    let mut worst = 0.0f64;
    for i in 0..u.len() {
        worst = worst.max((u[i] - a * f[i] - b[i]).abs());
    }
    Ok(worst)
}
