//! Small analytic problems used by tests and custom study configurations.

use super::IvpProblem;
use crate::error::{ensure_dim, Error, Result};
use crate::linalg::Mat;

/// The scalar test equation `u' = lambda u` with `u0 = 1`.
#[derive(Debug, Clone)]
pub struct DahlquistProblem {
    lambda: f64,
}

impl DahlquistProblem {
    pub fn new(lambda: f64) -> Self {
        Self { lambda }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl IvpProblem for DahlquistProblem {
    fn dimension(&self) -> usize {
        1
    }

    fn initial_value(&self) -> Vec<f64> {
        vec![1.0]
    }

    fn eval_f(&self, u: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(1, u.len())?;
        Ok(vec![self.lambda * u[0]])
    }

    fn apply_jacobian(&self, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(1, u.len())?;
        ensure_dim(1, v.len())?;
        Ok(vec![self.lambda * v[0]])
    }

    fn solve_node_implicit(
        &self,
        a: f64,
        b: &[f64],
        _guess: &[f64],
        _tol: f64,
        _max_iter: usize,
    ) -> Result<Vec<f64>> {
        ensure_dim(1, b.len())?;
        if a == 0.0 {
            return Ok(b.to_vec());
        }
        let denom = 1.0 - a * self.lambda;
        if denom.abs() < 1e-14 {
            return Err(Error::Factorization(
                "singular scalar node equation".into(),
            ));
        }
        Ok(vec![b[0] / denom])
    }

    fn exact_solution(&self, t: f64) -> Option<Vec<f64>> {
        Some(vec![(self.lambda * t).exp()])
    }

    fn linear_part(&self) -> Option<Mat> {
        let mut a = Mat::zeros(1, 1);
        a[(0, 0)] = self.lambda;
        Some(a)
    }
}

/// `u' = 0` in `n` dimensions; every quantity of interest is exactly zero.
#[derive(Debug, Clone)]
pub struct ZeroProblem {
    dim: usize,
}

impl ZeroProblem {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl IvpProblem for ZeroProblem {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn initial_value(&self) -> Vec<f64> {
        vec![1.0; self.dim]
    }

    fn eval_f(&self, u: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(self.dim, u.len())?;
        Ok(vec![0.0; self.dim])
    }

    fn apply_jacobian(&self, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(self.dim, u.len())?;
        ensure_dim(self.dim, v.len())?;
        Ok(vec![0.0; self.dim])
    }

    fn solve_node_implicit(
        &self,
        _a: f64,
        b: &[f64],
        _guess: &[f64],
        _tol: f64,
        _max_iter: usize,
    ) -> Result<Vec<f64>> {
        ensure_dim(self.dim, b.len())?;
        Ok(b.to_vec())
    }

    fn exact_solution(&self, _t: f64) -> Option<Vec<f64>> {
        Some(self.initial_value())
    }

    fn linear_part(&self) -> Option<Mat> {
        Some(Mat::zeros(self.dim, self.dim))
    }
}
