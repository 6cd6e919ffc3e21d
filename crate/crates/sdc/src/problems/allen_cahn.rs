//! Two-dimensional Allen-Cahn equation on the periodic unit square.

use super::{node_residual_inf, IvpProblem};
use crate::error::{ensure_dim, Error, Result};
use crate::linalg::conjugate_gradient;

/// `u_t = Lap(u) + u (1 - u^2) / eps^2` on `[-0.5, 0.5]^2` with periodic
/// boundaries, discretized with the 5-point Laplacian on an `n x n` grid
/// (`dx = 1/n`, right endpoint excluded by periodicity).
///
/// The initial value is `sin(kappa pi x) sin(kappa pi y)`. There is no
/// closed-form solution; errors are measured against computed references.
#[derive(Debug, Clone)]
pub struct AllenCahn2dProblem {
    eps: f64,
    kappa: u32,
    n: usize,
    dx: f64,
}

impl AllenCahn2dProblem {
    pub fn new(eps: f64, kappa: u32, n: usize) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument("scale eps must be positive".into()));
        }
        if kappa == 0 || kappa % 2 != 0 {
            // sin(kappa pi x) is 1-periodic only for even kappa
            return Err(Error::InvalidArgument(
                "mode index must be a positive even integer on the periodic square".into(),
            ));
        }
        if n < 2 * kappa as usize {
            return Err(Error::InvalidArgument(format!(
                "grid with {n} points per axis cannot resolve mode {kappa}"
            )));
        }
        Ok(Self {
            eps,
            kappa,
            n,
            dx: 1.0 / n as f64,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn kappa(&self) -> u32 {
        self.kappa
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        let c = 1.0 / (self.dx * self.dx);
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let up = if i == 0 { n - 1 } else { i - 1 };
            let down = if i + 1 == n { 0 } else { i + 1 };
            for j in 0..n {
                let left = if j == 0 { n - 1 } else { j - 1 };
                let right = if j + 1 == n { 0 } else { j + 1 };
                out[self.idx(i, j)] = c
                    * (u[self.idx(up, j)]
                        + u[self.idx(down, j)]
                        + u[self.idx(i, left)]
                        + u[self.idx(i, right)]
                        - 4.0 * u[self.idx(i, j)]);
            }
        }
        out
    }
}

impl IvpProblem for AllenCahn2dProblem {
    fn dimension(&self) -> usize {
        self.n * self.n
    }

    fn initial_value(&self) -> Vec<f64> {
        let n = self.n;
        let k = self.kappa as f64 * std::f64::consts::PI;
        let mut u = vec![0.0; n * n];
        for i in 0..n {
            let x = -0.5 + i as f64 * self.dx;
            for j in 0..n {
                let y = -0.5 + j as f64 * self.dx;
                u[self.idx(i, j)] = (k * x).sin() * (k * y).sin();
            }
        }
        u
    }

    fn eval_f(&self, u: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(self.dimension(), u.len())?;
        let inv_eps2 = 1.0 / (self.eps * self.eps);
        let mut out = self.laplacian(u);
        for (o, &v) in out.iter_mut().zip(u) {
            *o += v * (1.0 - v * v) * inv_eps2;
        }
        Ok(out)
    }

    fn apply_jacobian(&self, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(self.dimension(), u.len())?;
        ensure_dim(self.dimension(), v.len())?;
        let inv_eps2 = 1.0 / (self.eps * self.eps);
        let mut out = self.laplacian(v);
        for i in 0..u.len() {
            out[i] += (1.0 - 3.0 * u[i] * u[i]) * inv_eps2 * v[i];
        }
        Ok(out)
    }

    fn solve_node_implicit(
        &self,
        a: f64,
        b: &[f64],
        guess: &[f64],
        tol: f64,
        max_iter: usize,
    ) -> Result<Vec<f64>> {
        ensure_dim(self.dimension(), b.len())?;
        ensure_dim(self.dimension(), guess.len())?;
        if a == 0.0 {
            return Ok(b.to_vec());
        }
        // Newton outer iteration; the linearized system (I - a J) delta = r
        // is symmetric and solved matrix-free by conjugate gradient with an
        // inner tolerance of 0.01x the outer residual.
        let dim = self.dimension();
        let mut u = guess.to_vec();
        let mut residual = f64::INFINITY;
        for it in 0..max_iter {
            let f = self.eval_f(&u)?;
            let r: Vec<f64> = (0..dim).map(|i| b[i] - (u[i] - a * f[i])).collect();
            residual = r.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if residual <= tol {
                return Ok(u);
            }
            let apply = |v: &[f64]| -> Vec<f64> {
                let jv = self.apply_jacobian(&u, v).expect("dimensions checked");
                v.iter().zip(&jv).map(|(vi, ji)| vi - a * ji).collect()
            };
            let inner_tol = (0.01 * residual).max(1e-15);
            let (delta, _) = conjugate_gradient(apply, &r, &vec![0.0; dim], inner_tol, 4 * dim)
                .map_err(|e| match e {
                    Error::SolverFailure {
                        residual: res,
                        iterations,
                        ..
                    } => Error::SolverFailure {
                        context: format!("allen-cahn node solve, newton step {it}"),
                        residual: res,
                        iterations,
                    },
                    other => other,
                })?;
            for i in 0..dim {
                u[i] += delta[i];
            }
        }
        let final_res = node_residual_inf(self, a, b, &u)?;
        Err(Error::SolverFailure {
            context: "allen-cahn node solve".into(),
            residual: final_res.min(residual),
            iterations: max_iter,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_states_are_equilibria() {
        let p = AllenCahn2dProblem::new(0.2, 4, 16).unwrap();
        let dim = p.dimension();
        for c in [0.0, 1.0, -1.0] {
            let f = p.eval_f(&vec![c; dim]).unwrap();
            let worst = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(worst <= 1e-12, "f({c}) not zero: {worst}");
        }
    }

    #[test]
    fn initial_value_is_periodic_product_mode() {
        let p = AllenCahn2dProblem::new(0.2, 4, 16).unwrap();
        let u0 = p.initial_value();
        // corner x = y = -0.5 lies on a nodal line of sin(4 pi x)
        assert!(u0[0].abs() <= 1e-13);
        // interior sample
        let i = 2;
        let j = 5;
        let x = -0.5 + i as f64 / 16.0;
        let y = -0.5 + j as f64 / 16.0;
        let k = 4.0 * std::f64::consts::PI;
        let expect = (k * x).sin() * (k * y).sin();
        assert!((u0[i * 16 + j] - expect).abs() <= 1e-13);
    }

    #[test]
    fn node_solve_reaches_tolerance() {
        let p = AllenCahn2dProblem::new(0.2, 2, 8).unwrap();
        let dim = p.dimension();
        let b = p.initial_value();
        let guess = b.clone();
        let tol = 1e-12;
        let u = p.solve_node_implicit(0.01, &b, &guess, tol, 50).unwrap();
        let res = super::super::node_residual_inf(&p, 0.01, &b, &u).unwrap();
        assert!(res <= tol);
        assert_eq!(u.len(), dim);
    }

    #[test]
    fn rejects_odd_mode() {
        assert!(AllenCahn2dProblem::new(0.2, 3, 16).is_err());
        assert!(AllenCahn2dProblem::new(0.0, 4, 16).is_err());
    }
}
