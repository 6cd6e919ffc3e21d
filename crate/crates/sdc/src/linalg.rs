//! Small dense-matrix type and the iterative kernels used by the node and
//! collocation solvers.

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
///
/// Quadrature and transfer matrices are small (at most a few hundred rows),
/// so a plain `Vec` backing is sufficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let nr = rows.len();
        let nc = if nr == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(nr * nc);
        for r in rows {
            assert_eq!(r.len(), nc, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: nr,
            cols: nc,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// True when every strictly upper-triangular entry is exactly zero.
    pub fn is_lower_triangular(&self) -> bool {
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if self[(i, j)] != 0.0 {
                    return false;
                }
            }
        }
        true
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Doolittle LU factorization without pivoting: `a = L * U` with `L` unit
/// lower triangular. The convention is fixed so that downstream consumers of
/// `U` get a deterministic factor.
pub(crate) fn doolittle_lu(a: &Mat) -> Result<(Mat, Mat)> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::InvalidArgument("LU needs a square matrix".into()));
    }
    let mut l = Mat::identity(n);
    let mut u = Mat::zeros(n, n);
    let scale = a.max_abs().max(1.0);
    for i in 0..n {
        for j in i..n {
            let mut s = a[(i, j)];
            for k in 0..i {
                s -= l[(i, k)] * u[(k, j)];
            }
            u[(i, j)] = s;
        }
        let pivot = u[(i, i)];
        if pivot.abs() < 1e-14 * scale {
            return Err(Error::Factorization(format!(
                "near-singular leading minor at index {i} (pivot {pivot:.3e})"
            )));
        }
        for r in (i + 1)..n {
            let mut s = a[(r, i)];
            for k in 0..i {
                s -= l[(r, k)] * u[(k, i)];
            }
            l[(r, i)] = s / pivot;
        }
    }
    Ok((l, u))
}

/// Thomas algorithm for a tridiagonal system with constant off-diagonals.
/// The caller guarantees diagonal dominance, which holds for `I - a*A` with
/// `A` the FD Laplacian and `a >= 0`.
pub(crate) fn solve_tridiagonal_const(lower: f64, diag: f64, upper: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    if n == 0 {
        return Vec::new();
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper / diag;
    d[0] = rhs[0] / diag;
    for i in 1..n {
        let denom = diag - lower * c[i - 1];
        c[i] = upper / denom;
        d[i] = (rhs[i] - lower * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Conjugate gradient for a symmetric positive-definite operator given as a
/// matrix-free action. Returns the solution and the final residual 2-norm.
pub(crate) fn conjugate_gradient<F>(
    apply: F,
    b: &[f64],
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let mut x = x0.to_vec();
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= tol {
        return Ok((x, rr.sqrt()));
    }
    for it in 0..max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SolverFailure {
                context: "conjugate gradient (lost positive definiteness)".into(),
                residual: rr.sqrt(),
                iterations: it,
            });
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol {
            return Ok((x, rr_new.sqrt()));
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::SolverFailure {
        context: "conjugate gradient".into(),
        residual: rr.sqrt(),
        iterations: max_iter,
    })
}

/// Restarted GMRES for a general square operator given as a matrix-free
/// action. Returns the solution and the achieved residual 2-norm.
pub(crate) fn gmres<F>(
    apply: F,
    b: &[f64],
    x0: &[f64],
    tol: f64,
    restart: usize,
    max_restarts: usize,
) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let mut x = x0.to_vec();
    let mut last_res = f64::INFINITY;

    for _cycle in 0..max_restarts {
        let ax = apply(&x);
        let r0: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm2(&r0);
        if beta <= tol {
            return Ok((x, beta));
        }

        let m = restart.min(n);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r0.iter().map(|v| v / beta).collect());
        // Hessenberg stored column-wise, h[j] has j+2 entries.
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;

        for j in 0..m {
            let mut w = apply(&basis[j]);
            let mut hj = vec![0.0; j + 2];
            // modified Gram-Schmidt
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                hj[i] = hij;
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= hij * vi;
                }
            }
            let wnorm = norm2(&w);
            hj[j + 1] = wnorm;

            // apply accumulated Givens rotations
            for i in 0..j {
                let t = cs[i] * hj[i] + sn[i] * hj[i + 1];
                hj[i + 1] = -sn[i] * hj[i] + cs[i] * hj[i + 1];
                hj[i] = t;
            }
            let denom = (hj[j] * hj[j] + hj[j + 1] * hj[j + 1]).sqrt();
            let (c, s) = if denom == 0.0 {
                (1.0, 0.0)
            } else {
                (hj[j] / denom, hj[j + 1] / denom)
            };
            cs.push(c);
            sn.push(s);
            hj[j] = c * hj[j] + s * hj[j + 1];
            hj[j + 1] = 0.0;
            g[j + 1] = -s * g[j];
            g[j] *= c;
            h.push(hj);
            k_used = j + 1;

            let res = g[j + 1].abs();
            if res <= tol || wnorm == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wnorm).collect());
        }

        // back substitution for the least-squares coefficients
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in (i + 1)..k_used {
                s -= h[j][i] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for i in 0..n {
                x[i] += yj * basis[j][i];
            }
        }

        let ax = apply(&x);
        let res = norm2(
            &b.iter()
                .zip(&ax)
                .map(|(bi, ai)| bi - ai)
                .collect::<Vec<_>>(),
        );
        last_res = res;
        if res <= tol {
            return Ok((x, res));
        }
    }
    Err(Error::SolverFailure {
        context: "gmres".into(),
        residual: last_res,
        iterations: max_restarts * restart,
    })
}
