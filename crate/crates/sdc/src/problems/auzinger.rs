//! A planar nonlinear oscillator whose exact solution traces the unit circle.

use super::IvpProblem;
use crate::error::{ensure_dim, Error, Result};

/// `x' = -y - lambda x (1 - x^2 - y^2)`, `y' = x - lambda rho y (1 - x^2 - y^2)`
/// with `lambda < 0` controlling the stiffness and `rho > 0`.
///
/// Starting from `u0 = (1, 0)` the cubic terms vanish on the unit circle and
/// the solution is `(cos t, sin t)`.
#[derive(Debug, Clone)]
pub struct AuzingerProblem {
    lambda: f64,
    rho: f64,
}

impl AuzingerProblem {
    pub fn new(lambda: f64, rho: f64) -> Result<Self> {
        if !(lambda < 0.0) {
            return Err(Error::InvalidArgument("lambda must be negative".into()));
        }
        if !(rho > 0.0) {
            return Err(Error::InvalidArgument("rho must be positive".into()));
        }
        Ok(Self { lambda, rho })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// 2x2 Jacobian of the right-hand side.
    fn jacobian(&self, u: &[f64]) -> [[f64; 2]; 2] {
        let (x, y) = (u[0], u[1]);
        let l = self.lambda;
        let r = self.rho;
        let g = 1.0 - x * x - y * y;
        [
            [-l * g + 2.0 * l * x * x, -1.0 + 2.0 * l * x * y],
            [1.0 + 2.0 * l * r * x * y, -l * r * g + 2.0 * l * r * y * y],
        ]
    }
}

impl IvpProblem for AuzingerProblem {
    fn dimension(&self) -> usize {
        2
    }

    fn initial_value(&self) -> Vec<f64> {
        vec![1.0, 0.0]
    }

    fn eval_f(&self, u: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(2, u.len())?;
        let (x, y) = (u[0], u[1]);
        let g = 1.0 - x * x - y * y;
        Ok(vec![
            -y - self.lambda * x * g,
            x - self.lambda * self.rho * y * g,
        ])
    }

    fn apply_jacobian(&self, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(2, u.len())?;
        ensure_dim(2, v.len())?;
        let j = self.jacobian(u);
        Ok(vec![
            j[0][0] * v[0] + j[0][1] * v[1],
            j[1][0] * v[0] + j[1][1] * v[1],
        ])
    }

    fn solve_node_implicit(
        &self,
        a: f64,
        b: &[f64],
        guess: &[f64],
        tol: f64,
        max_iter: usize,
    ) -> Result<Vec<f64>> {
        ensure_dim(2, b.len())?;
        ensure_dim(2, guess.len())?;
        if a == 0.0 {
            return Ok(b.to_vec());
        }
        let mut u = [guess[0], guess[1]];
        let mut residual = f64::INFINITY;
        for _ in 0..max_iter {
            let f = self.eval_f(&u)?;
            let r = [b[0] - (u[0] - a * f[0]), b[1] - (u[1] - a * f[1])];
            residual = r[0].abs().max(r[1].abs());
            if residual <= tol {
                return Ok(u.to_vec());
            }
            // solve (I - a J) delta = r directly
            let j = self.jacobian(&u);
            let m = [
                [1.0 - a * j[0][0], -a * j[0][1]],
                [-a * j[1][0], 1.0 - a * j[1][1]],
            ];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if det.abs() < 1e-14 {
                return Err(Error::Factorization(
                    "singular 2x2 Newton system in node solve".into(),
                ));
            }
            u[0] += (r[0] * m[1][1] - r[1] * m[0][1]) / det;
            u[1] += (r[1] * m[0][0] - r[0] * m[1][0]) / det;
        }
        Err(Error::SolverFailure {
            context: "auzinger node solve".into(),
            residual,
            iterations: max_iter,
        })
    }

    fn exact_solution(&self, t: f64) -> Option<Vec<f64>> {
        Some(vec![t.cos(), t.sin()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rhs_at_initial_point() {
        let p = AuzingerProblem::new(-0.75, 3.0).unwrap();
        let f = p.eval_f(&[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(f[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn circle_invariance() {
        let p = AuzingerProblem::new(-0.75, 3.0).unwrap();
        for k in 0..16 {
            let theta = k as f64 * std::f64::consts::PI / 8.0;
            let (x, y) = (theta.cos(), theta.sin());
            let f = p.eval_f(&[x, y]).unwrap();
            assert!((f[0] + y).abs() <= 1e-14);
            assert!((f[1] - x).abs() <= 1e-14);
        }
    }

    #[test]
    fn exact_solution_values() {
        let p = AuzingerProblem::new(-0.75, 3.0).unwrap();
        let u0 = p.exact_solution(0.0).unwrap();
        assert_eq!(u0, vec![1.0, 0.0]);
        let u = p.exact_solution(std::f64::consts::FRAC_PI_2).unwrap();
        assert_abs_diff_eq!(u[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(u[1], 1.0, epsilon = 1e-15);
    }

    // Newton solve cross-checked against a finite-difference-Jacobian Newton
    // iteration written independently in the test.
    #[test]
    fn node_solve_matches_fd_newton_oracle() {
        let p = AuzingerProblem::new(-0.75, 3.0).unwrap();
        let a = 0.1;
        let b = [1.0, 0.0];
        let u = p
            .solve_node_implicit(a, &b, &[1.0, 0.0], 1e-13, 50)
            .unwrap();
        let f = p.eval_f(&u).unwrap();
        let res = (u[0] - a * f[0] - b[0]).abs().max((u[1] - a * f[1] - b[1]).abs());
        assert!(res <= 1e-12, "residual {res}");

        // oracle: damped fixed-slope Newton with FD Jacobian
        let h = 1e-7;
        let mut v = [1.0, 0.0];
        for _ in 0..200 {
            let f = p.eval_f(&v).unwrap();
            let r = [b[0] - (v[0] - a * f[0]), b[1] - (v[1] - a * f[1])];
            if r[0].abs().max(r[1].abs()) <= 1e-13 {
                break;
            }
            let mut j = [[0.0; 2]; 2];
            for col in 0..2 {
                let mut vp = v;
                vp[col] += h;
                let fp = p.eval_f(&vp).unwrap();
                let mut vm = v;
                vm[col] -= h;
                let fm = p.eval_f(&vm).unwrap();
                for row in 0..2 {
                    let df = (fp[row] - fm[row]) / (2.0 * h);
                    j[row][col] = (if row == col { 1.0 } else { 0.0 }) - a * df;
                }
            }
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            v[0] += (r[0] * j[1][1] - r[1] * j[0][1]) / det;
            v[1] += (r[1] * j[0][0] - r[0] * j[1][0]) / det;
        }
        assert!((u[0] - v[0]).abs() <= 1e-9);
        assert!((u[1] - v[1]).abs() <= 1e-9);
    }

    #[test]
    fn parameter_validation() {
        assert!(AuzingerProblem::new(0.5, 3.0).is_err());
        assert!(AuzingerProblem::new(-0.75, 0.0).is_err());
    }
}
