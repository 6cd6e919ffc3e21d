//! Gauss-Radau collocation nodes, the spectral quadrature matrix `Q` and its
//! lower-triangular approximations `Q_Delta`.
//!
//! Nodes are stored on the unit interval; the step size only enters where an
//! equation multiplies by `dt`. `Q` integrates the Lagrange basis of the
//! nodes, so it is exact for polynomials of degree `M - 1`.

use crate::error::{ensure_dim, Error, Result};
use crate::linalg::{doolittle_lu, Mat};
use crate::problems::IvpProblem;
use crate::sweeper::NodeVector;

/// Supported collocation node families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeFamily {
    /// Radau points that include the right endpoint and exclude the left one.
    GaussRadauRight,
}

/// Node count, node family and the time interval of one collocation problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollocationSpec {
    num_nodes: usize,
    family: NodeFamily,
    t0: f64,
    t1: f64,
}

impl CollocationSpec {
    pub fn new(num_nodes: usize, family: NodeFamily, t0: f64, t1: f64) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::InvalidArgument("node count must be >= 1".into()));
        }
        if !(t1 - t0 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "interval must have positive length, got [{t0}, {t1}]"
            )));
        }
        Ok(Self {
            num_nodes,
            family,
            t0,
            t1,
        })
    }

    pub fn radau_right(num_nodes: usize, t0: f64, t1: f64) -> Result<Self> {
        Self::new(num_nodes, NodeFamily::GaussRadauRight, t0, t1)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn family(&self) -> NodeFamily {
        self.family
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn dt(&self) -> f64 {
        self.t1 - self.t0
    }
}

/// Nodes on `(0, 1]`, the quadrature matrix and the node spacings of one
/// collocation rule.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureTables {
    nodes: Vec<f64>,
    q: Mat,
    spacings: Vec<f64>,
}

impl QuadratureTables {
    /// Builds the tables for the unit interval from a node count.
    pub fn radau_right(num_nodes: usize) -> Result<Self> {
        let nodes = compute_nodes(num_nodes)?;
        Self::from_nodes(nodes)
    }

    pub fn for_spec(spec: &CollocationSpec) -> Result<Self> {
        match spec.family() {
            NodeFamily::GaussRadauRight => Self::radau_right(spec.num_nodes()),
        }
    }

    /// Builds the tables from explicit unit-interval nodes.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        let q = compute_q(&nodes)?;
        let spacings = node_spacings(&nodes);
        Ok(Self { nodes, q, spacings })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    /// `spacings[0] = nodes[0]`, `spacings[m] = nodes[m] - nodes[m-1]`.
    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }
}

/// The lower-triangular quadrature rules used to precondition the Picard
/// iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreconditionerKind {
    /// Implicit Euler sub-stepping between nodes; nonzero diagonal.
    RightRectangle,
    /// Explicit Euler sub-stepping; strictly lower triangular.
    LeftRectangle,
    /// Transposed upper factor of the Doolittle LU decomposition of `Q^T`.
    LuTrick,
}

/// A lower-triangular preconditioner matrix tagged with its rule.
#[derive(Debug, Clone, PartialEq)]
pub struct QDeltaMatrix {
    matrix: Mat,
    kind: PreconditionerKind,
}

impl QDeltaMatrix {
    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn kind(&self) -> PreconditionerKind {
        self.kind
    }
}

fn node_spacings(nodes: &[f64]) -> Vec<f64> {
    let mut s = Vec::with_capacity(nodes.len());
    let mut prev = 0.0;
    for &t in nodes {
        s.push(t - prev);
        prev = t;
    }
    s
}

fn check_nodes(nodes: &[f64]) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::InvalidArgument("empty node set".into()));
    }
    let mut prev = 0.0;
    for (i, &t) in nodes.iter().enumerate() {
        if !(t > prev) || t > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "nodes must be strictly increasing in (0, 1]; offending index {i}"
            )));
        }
        prev = t;
    }
    Ok(())
}

/// Legendre value and derivative at `x` via the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        p_prev = p;
        p = p_next;
    }
    // derivative from the pair (P_n, P_{n-1}); only used away from |x| = 1
    let dp = (n as f64) * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// Right-Radau defining polynomial `g(x) = P_{m-1}(x) - P_m(x)` on `[-1, 1]`
/// together with its derivative. Its roots are the interior nodes plus `+1`.
fn radau_polynomial(m: usize, x: f64) -> (f64, f64) {
    let (p_lo, dp_lo) = legendre_with_derivative(m - 1, x);
    let (p_hi, dp_hi) = legendre_with_derivative(m, x);
    (p_lo - p_hi, dp_lo - dp_hi)
}

/// Right-Radau nodes on `(0, 1]` with the last node equal to one.
///
/// The interior nodes are the eigenvalues of the Jacobi matrix of the weight
/// `(1 - x)` (Golub-Welsch), polished with a few Newton steps on the defining
/// polynomial.
pub fn compute_nodes(m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::InvalidArgument("node count must be >= 1".into()));
    }
    if m == 1 {
        return Ok(vec![1.0]);
    }

    // Jacobi matrix for the Jacobi polynomials with alpha = 1, beta = 0;
    // its eigenvalues are the m - 1 interior right-Radau points on (-1, 1).
    let k = m - 1;
    let mut jac = nalgebra::DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        let n = i as f64;
        let diag = if i == 0 {
            -1.0 / 3.0
        } else {
            -1.0 / ((2.0 * n + 1.0) * (2.0 * n + 3.0))
        };
        jac[(i, i)] = diag;
        if i + 1 < k {
            let np = n + 1.0;
            let beta = np * (np + 1.0) / ((2.0 * np + 1.0) * (2.0 * np + 1.0));
            let off = beta.sqrt();
            jac[(i, i + 1)] = off;
            jac[(i + 1, i)] = off;
        }
    }
    let mut interior: Vec<f64> = nalgebra::SymmetricEigen::new(jac)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    interior.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Newton polish on the defining polynomial, tolerance 1e-14.
    for x in interior.iter_mut() {
        for _ in 0..3 {
            let (g, dg) = radau_polynomial(m, *x);
            let step = g / dg;
            *x -= step;
            if step.abs() <= 1e-14 {
                break;
            }
        }
    }

    let mut nodes: Vec<f64> = interior.iter().map(|x| 0.5 * (x + 1.0)).collect();
    nodes.push(1.0);
    check_nodes(&nodes)?;
    Ok(nodes)
}

/// Gauss-Legendre rule of `n` points on `[-1, 1]` via Newton iteration.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() <= 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    // Newton starting guesses enumerate roots from the right; flip to
    // ascending order.
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

fn lagrange_basis_at(nodes: &[f64], j: usize, s: f64) -> f64 {
    let mut v = 1.0;
    for (i, &ti) in nodes.iter().enumerate() {
        if i != j {
            v *= (s - ti) / (nodes[j] - ti);
        }
    }
    v
}

/// Quadrature matrix with entries `q[m][j] = integral of l_j from 0 to
/// nodes[m]` on the unit interval.
///
/// Each entry is evaluated with an auxiliary Gauss-Legendre rule of `2M`
/// points, which is exact for the degree `M - 1` integrand up to roundoff.
pub fn compute_q(nodes: &[f64]) -> Result<Mat> {
    check_nodes(nodes)?;
    let m = nodes.len();
    let (gl_nodes, gl_weights) = gauss_legendre(2 * m);
    let mut q = Mat::zeros(m, m);
    for (row, &tau) in nodes.iter().enumerate() {
        // map the reference rule to [0, tau]
        let half = 0.5 * tau;
        for j in 0..m {
            let mut acc = 0.0;
            for (x, w) in gl_nodes.iter().zip(&gl_weights) {
                let s = half * (x + 1.0);
                acc += w * lagrange_basis_at(nodes, j, s);
            }
            q[(row, j)] = acc * half;
        }
    }
    Ok(q)
}

/// Builds one of the lower-triangular preconditioner matrices. `q` is
/// required only for [`PreconditionerKind::LuTrick`].
pub fn compute_q_delta(
    kind: PreconditionerKind,
    nodes: &[f64],
    q: Option<&Mat>,
) -> Result<QDeltaMatrix> {
    check_nodes(nodes)?;
    let m = nodes.len();
    let spacings = node_spacings(nodes);
    let matrix = match kind {
        PreconditionerKind::RightRectangle => {
            let mut mat = Mat::zeros(m, m);
            for row in 0..m {
                for j in 0..=row {
                    mat[(row, j)] = spacings[j];
                }
            }
            mat
        }
        PreconditionerKind::LeftRectangle => {
            let mut mat = Mat::zeros(m, m);
            for row in 0..m {
                for j in 0..row {
                    mat[(row, j)] = spacings[j + 1];
                }
            }
            mat
        }
        PreconditionerKind::LuTrick => {
            let q = q.ok_or_else(|| {
                Error::InvalidArgument("the LU rule needs the quadrature matrix".into())
            })?;
            if q.rows() != m || q.cols() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    actual: q.rows(),
                });
            }
            let (_l, u) = doolittle_lu(&q.transpose())?;
            u.transpose()
        }
    };
    debug_assert!(matrix.is_lower_triangular());
    Ok(QDeltaMatrix { matrix, kind })
}

/// Applies `scale * (mat ⊗ I_N)` to the node blocks of `u`.
pub(crate) fn apply_kron(mat: &Mat, u: &NodeVector, scale: f64) -> NodeVector {
    let m = u.num_nodes();
    let n = u.dim();
    assert_eq!(mat.rows(), m);
    assert_eq!(mat.cols(), m);
    let mut out = NodeVector::zeros(m, n);
    for row in 0..m {
        let coeffs = mat.row(row);
        let block = out.node_mut(row);
        for (j, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let src = u.node(j);
            for i in 0..n {
                block[i] += scale * c * src[i];
            }
        }
    }
    // the borrow above goes block by block; rebuild is not needed
    out
}

/// Residual `C(U) - U_0 = U - dt (Q ⊗ I) F(U) - U_0` of the collocation
/// problem; zero (up to solver tolerance) exactly when `U` solves it.
pub fn collocation_residual(
    u: &NodeVector,
    u0: &[f64],
    tables: &QuadratureTables,
    dt: f64,
    problem: &dyn IvpProblem,
) -> Result<NodeVector> {
    ensure_dim(problem.dimension(), u0.len())?;
    ensure_dim(problem.dimension(), u.dim())?;
    ensure_dim(tables.num_nodes(), u.num_nodes())?;
    let m = u.num_nodes();
    let n = u.dim();
    let mut f_nodes = NodeVector::zeros(m, n);
    for j in 0..m {
        let f = problem.eval_f(u.node(j))?;
        f_nodes.node_mut(j).copy_from_slice(&f);
    }
    let quad = apply_kron(tables.q(), &f_nodes, dt);
    let mut res = u.clone();
    for mnode in 0..m {
        let block = res.node_mut(mnode);
        let qb = quad.node(mnode);
        for i in 0..n {
            block[i] -= qb[i] + u0[i];
        }
    }
    Ok(res)
}
