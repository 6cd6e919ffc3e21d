//! Spectral deferred corrections (SDC) and two-level multi-level SDC (MLSDC)
//! for initial value problems.
//!
//! The crate is organized around the collocation problem: [`collocation`]
//! builds Gauss-Radau nodes, the quadrature matrix `Q` and its
//! lower-triangular preconditioners; [`problems`] defines the IVP abstraction
//! and the built-in test problems; [`sweeper`] implements the SDC sweep and
//! the direct collocation solver; [`mlsdc`] adds the two-level FAS cycle with
//! spatial and temporal transfer operators; [`diagnostics`] measures errors,
//! convergence orders and contraction slopes across step sizes.

pub mod collocation;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod mlsdc;
pub mod problems;
pub mod sweeper;

pub use collocation::{
    collocation_residual, compute_nodes, compute_q, compute_q_delta, CollocationSpec, NodeFamily,
    PreconditionerKind, QDeltaMatrix, QuadratureTables,
};
pub use error::{Error, Result};
pub use linalg::Mat;
pub use problems::{
    AllenCahn2dProblem, AuzingerProblem, DahlquistProblem, Heat1dProblem, IvpProblem, ZeroProblem,
};
pub use sweeper::{
    make_initial_guess, picard_sweep, reference_solution, run_sdc, sdc_sweep, solve_collocation,
    InitialGuess, NodeVector, SweepConfig,
};
