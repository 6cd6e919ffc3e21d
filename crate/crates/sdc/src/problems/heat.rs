//! One-dimensional heat equation, discretized with second-order finite
//! differences and homogeneous Dirichlet boundaries.

use super::IvpProblem;
use crate::error::{ensure_dim, Error, Result};
use crate::linalg::{solve_tridiagonal_const, Mat};

/// `u_t = nu * u_xx` on `[0, 1]` with `u(0) = u(1) = 0`, discretized on `n`
/// interior points with spacing `dx = 1 / (n + 1)`.
///
/// The initial value is the sine mode `sin(kappa * pi * x)`, which is an
/// exact eigenvector of the discrete Laplacian; the discretized system
/// therefore has a closed-form solution used as the exact reference.
#[derive(Debug, Clone)]
pub struct Heat1dProblem {
    nu: f64,
    kappa: u32,
    n: usize,
    dx: f64,
}

impl Heat1dProblem {
    pub fn new(nu: f64, kappa: u32, n: usize) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::InvalidArgument("diffusivity must be positive".into()));
        }
        if kappa == 0 {
            return Err(Error::InvalidArgument("mode index must be >= 1".into()));
        }
        if n == 0 || (kappa as usize) > n {
            return Err(Error::InvalidArgument(format!(
                "grid with {n} interior points cannot carry mode {kappa}"
            )));
        }
        Ok(Self {
            nu,
            kappa,
            n,
            dx: 1.0 / (n as f64 + 1.0),
        })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn kappa(&self) -> u32 {
        self.kappa
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Interior grid point `x_i = (i + 1) dx`.
    pub fn grid_point(&self, i: usize) -> f64 {
        (i as f64 + 1.0) * self.dx
    }

    /// Eigenvalue of the discrete FD Laplacian for the excited mode:
    /// `rho = (2 - 2 cos(kappa pi dx)) / dx^2`. `sin(kappa pi x)` decays as
    /// `exp(-nu rho t)` under the discretized dynamics.
    pub fn fd_eigenvalue(&self) -> f64 {
        let angle = self.kappa as f64 * std::f64::consts::PI * self.dx;
        (2.0 - 2.0 * angle.cos()) / (self.dx * self.dx)
    }

    fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let c = self.nu / (self.dx * self.dx);
        let n = self.n;
        (0..n)
            .map(|i| {
                let left = if i > 0 { u[i - 1] } else { 0.0 };
                let right = if i + 1 < n { u[i + 1] } else { 0.0 };
                c * (left - 2.0 * u[i] + right)
            })
            .collect()
    }
}

impl IvpProblem for Heat1dProblem {
    fn dimension(&self) -> usize {
        self.n
    }

    fn initial_value(&self) -> Vec<f64> {
        let k = self.kappa as f64 * std::f64::consts::PI;
        (0..self.n).map(|i| (k * self.grid_point(i)).sin()).collect()
    }

    fn eval_f(&self, u: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(self.n, u.len())?;
        Ok(self.laplacian(u))
    }

    fn apply_jacobian(&self, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(self.n, u.len())?;
        ensure_dim(self.n, v.len())?;
        Ok(self.laplacian(v))
    }

    fn solve_node_implicit(
        &self,
        a: f64,
        b: &[f64],
        _guess: &[f64],
        _tol: f64,
        _max_iter: usize,
    ) -> Result<Vec<f64>> {
        ensure_dim(self.n, b.len())?;
        if a == 0.0 {
            return Ok(b.to_vec());
        }
        // (I - a A) u = b with A = (nu/dx^2) tridiag(1, -2, 1); strictly
        // diagonally dominant, so the Thomas algorithm is stable.
        let c = a * self.nu / (self.dx * self.dx);
        Ok(solve_tridiagonal_const(-c, 1.0 + 2.0 * c, -c, b))
    }

    fn exact_solution(&self, t: f64) -> Option<Vec<f64>> {
        let decay = (-t * self.nu * self.fd_eigenvalue()).exp();
        Some(self.initial_value().iter().map(|v| v * decay).collect())
    }

    fn linear_part(&self) -> Option<Mat> {
        let c = self.nu / (self.dx * self.dx);
        let mut a = Mat::zeros(self.n, self.n);
        for i in 0..self.n {
            a[(i, i)] = -2.0 * c;
            if i > 0 {
                a[(i, i - 1)] = c;
            }
            if i + 1 < self.n {
                a[(i, i + 1)] = c;
            }
        }
        Some(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_state_maps_to_zero() {
        let p = Heat1dProblem::new(0.1, 4, 31).unwrap();
        let f = p.eval_f(&vec![0.0; 31]).unwrap();
        assert!(f.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rhs_is_linear() {
        let p = Heat1dProblem::new(0.1, 4, 31).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let u: Vec<f64> = (0..31).map(|_| rng.gen::<f64>() - 0.5).collect();
        let v: Vec<f64> = (0..31).map(|_| rng.gen::<f64>() - 0.5).collect();
        let (alpha, beta) = (1.7, -0.4);
        let combo: Vec<f64> = u.iter().zip(&v).map(|(a, b)| alpha * a + beta * b).collect();
        let f_combo = p.eval_f(&combo).unwrap();
        let fu = p.eval_f(&u).unwrap();
        let fv = p.eval_f(&v).unwrap();
        for i in 0..31 {
            assert_abs_diff_eq!(f_combo[i], alpha * fu[i] + beta * fv[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn initial_value_is_sine_mode() {
        let p = Heat1dProblem::new(0.1, 4, 63).unwrap();
        let u0 = p.exact_solution(0.0).unwrap();
        for i in 0..63 {
            let x = (i as f64 + 1.0) / 64.0;
            assert_abs_diff_eq!(u0[i], (4.0 * std::f64::consts::PI * x).sin(), epsilon = 1e-14);
        }
    }

    // The closed-form decay rate is validated against a brute-force matrix
    // exponential of the dense FD operator.
    #[test]
    fn exact_solution_matches_matrix_exponential_oracle() {
        let p = Heat1dProblem::new(0.1, 3, 15).unwrap();
        let a = p.linear_part().unwrap();
        let n = p.dimension();
        let dense = nalgebra::DMatrix::<f64>::from_fn(n, n, |i, j| a[(i, j)]);
        let eig = nalgebra::SymmetricEigen::new(dense);
        let t = 0.37;
        let u0 = nalgebra::DVector::<f64>::from_vec(p.initial_value());
        // u(t) = V exp(L t) V^T u0
        let coeffs = eig.eigenvectors.transpose() * &u0;
        let mut scaled = coeffs.clone();
        for i in 0..n {
            scaled[i] *= (eig.eigenvalues[i] * t).exp();
        }
        let oracle = &eig.eigenvectors * scaled;
        let closed_form = p.exact_solution(t).unwrap();
        for i in 0..n {
            assert_abs_diff_eq!(closed_form[i], oracle[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn node_solve_matches_dense_oracle() {
        let p = Heat1dProblem::new(0.1, 4, 31).unwrap();
        let n = p.dimension();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let b: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
        let a_coef = 0.07;
        let u = p
            .solve_node_implicit(a_coef, &b, &vec![0.0; n], 1e-13, 1)
            .unwrap();

        let a = p.linear_part().unwrap();
        let mut sys = nalgebra::DMatrix::<f64>::from_fn(n, n, |i, j| {
            (if i == j { 1.0 } else { 0.0 }) - a_coef * a[(i, j)]
        });
        let oracle = sys
            .clone()
            .lu()
            .solve(&nalgebra::DVector::from_vec(b.clone()))
            .unwrap();
        sys.fill(0.0);
        for i in 0..n {
            assert_abs_diff_eq!(u[i], oracle[i], epsilon = 1e-12);
        }
        // residual at machine precision
        let f = p.eval_f(&u).unwrap();
        let res = (0..n)
            .map(|i| (u[i] - a_coef * f[i] - b[i]).abs())
            .fold(0.0f64, f64::max);
        assert!(res <= 1e-13);
    }

    #[test]
    fn rejects_unresolvable_mode() {
        assert!(Heat1dProblem::new(0.1, 8, 7).is_err());
        assert!(Heat1dProblem::new(-0.1, 4, 31).is_err());
    }
}
