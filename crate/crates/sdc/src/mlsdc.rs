//! Two-level MLSDC: the FAS tau correction, coarse and fine sweeps, and the
//! spatial/temporal transfer operators that couple the levels.

use std::sync::Arc;

use crate::collocation::{apply_kron, QDeltaMatrix, QuadratureTables};
use crate::error::{ensure_dim, Error, Result};
use crate::linalg::Mat;
use crate::problems::IvpProblem;
use crate::sweeper::{sdc_sweep, DivergenceGuard, InitialGuess, NodeVector};

/// Boundary handling of the spatial grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Interior points of `[0, 1]`, values at the endpoints are exact zeros.
    /// Nested grids require `n_fine = 2 n_coarse + 1`.
    Dirichlet,
    /// Wrap-around indexing, `n_fine = 2 n_coarse`.
    Periodic,
}

/// Interpolation stencil of one fine point: coarse indices and Lagrange
/// weights. Points that coincide with a coarse point carry a single unit
/// weight.
#[derive(Debug, Clone)]
struct Stencil {
    indices: Vec<usize>,
    weights: Vec<f64>,
}

/// Injection restriction and piecewise Lagrange interpolation between two
/// nested grids, applied per axis (`ndim` is 1 for lines, 2 for squares).
#[derive(Debug, Clone)]
pub struct SpatialTransfer {
    fine_n: usize,
    coarse_n: usize,
    ndim: usize,
    order: usize,
    boundary: Boundary,
    stencils: Vec<Stencil>,
    /// fine axis index of each coarse axis point
    inject: Vec<usize>,
}

impl SpatialTransfer {
    pub fn new(
        boundary: Boundary,
        fine_n: usize,
        coarse_n: usize,
        order: usize,
        ndim: usize,
    ) -> Result<Self> {
        if order == 0 || order % 2 != 0 {
            return Err(Error::InvalidArgument(
                "interpolation order must be a positive even integer".into(),
            ));
        }
        if order > coarse_n {
            return Err(Error::InvalidArgument(format!(
                "interpolation order {order} exceeds the coarse grid size {coarse_n}"
            )));
        }
        if !(ndim == 1 || ndim == 2) {
            return Err(Error::InvalidArgument("ndim must be 1 or 2".into()));
        }
        let nested = match boundary {
            Boundary::Dirichlet => fine_n == 2 * coarse_n + 1,
            Boundary::Periodic => fine_n == 2 * coarse_n,
        };
        if !nested {
            return Err(Error::InvalidArgument(format!(
                "grids {fine_n}/{coarse_n} are not nested for {boundary:?} boundaries"
            )));
        }

        let (stencils, inject) = match boundary {
            Boundary::Dirichlet => build_dirichlet_stencils(fine_n, coarse_n, order),
            Boundary::Periodic => build_periodic_stencils(fine_n, coarse_n, order),
        };
        Ok(Self {
            fine_n,
            coarse_n,
            ndim,
            order,
            boundary,
            stencils,
            inject,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn fine_axis_points(&self) -> usize {
        self.fine_n
    }

    pub fn coarse_axis_points(&self) -> usize {
        self.coarse_n
    }

    /// Total state dimension on the fine level.
    pub fn fine_dim(&self) -> usize {
        self.fine_n.pow(self.ndim as u32)
    }

    pub fn coarse_dim(&self) -> usize {
        self.coarse_n.pow(self.ndim as u32)
    }

    /// Injection: picks the fine values at coincident coarse points.
    pub fn restrict_state(&self, fine: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(self.fine_dim(), fine.len())?;
        match self.ndim {
            1 => Ok(self.inject.iter().map(|&i| fine[i]).collect()),
            _ => {
                let nf = self.fine_n;
                let nc = self.coarse_n;
                let mut out = Vec::with_capacity(nc * nc);
                for &i in &self.inject {
                    for &j in &self.inject {
                        out.push(fine[i * nf + j]);
                    }
                }
                Ok(out)
            }
        }
    }

    fn interpolate_axis(&self, coarse: &[f64]) -> Vec<f64> {
        self.stencils
            .iter()
            .map(|s| {
                s.indices
                    .iter()
                    .zip(&s.weights)
                    .map(|(&k, &w)| w * coarse[k])
                    .sum()
            })
            .collect()
    }

    /// Piecewise Lagrange interpolation to the fine grid.
    pub fn interpolate_state(&self, coarse: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(self.coarse_dim(), coarse.len())?;
        match self.ndim {
            1 => Ok(self.interpolate_axis(coarse)),
            _ => {
                let nf = self.fine_n;
                let nc = self.coarse_n;
                // first axis: coarse rows -> fine rows
                let mut half = vec![0.0; nf * nc];
                for j in 0..nc {
                    let col: Vec<f64> = (0..nc).map(|i| coarse[i * nc + j]).collect();
                    let fine_col = self.interpolate_axis(&col);
                    for i in 0..nf {
                        half[i * nc + j] = fine_col[i];
                    }
                }
                // second axis: rows of the intermediate grid
                let mut out = vec![0.0; nf * nf];
                for i in 0..nf {
                    let row = &half[i * nc..(i + 1) * nc];
                    let fine_row = self.interpolate_axis(row);
                    out[i * nf..(i + 1) * nf].copy_from_slice(&fine_row);
                }
                Ok(out)
            }
        }
    }
}

fn lagrange_weights(positions: &[f64], target: f64) -> Vec<f64> {
    let p = positions.len();
    let mut w = vec![1.0; p];
    for j in 0..p {
        for i in 0..p {
            if i != j {
                w[j] *= (target - positions[i]) / (positions[j] - positions[i]);
            }
        }
    }
    w
}

/// Dirichlet stencils in fine-index coordinates: fine point `i` sits at
/// coordinate `i + 1`, coarse point `k` at `2 (k + 1)`. The boundary values
/// at coordinates `0` and `n_fine + 1` are exact zeros and may enter a
/// stencil; their weights are dropped from the stored entries.
fn build_dirichlet_stencils(
    fine_n: usize,
    coarse_n: usize,
    order: usize,
) -> (Vec<Stencil>, Vec<usize>) {
    let inject: Vec<usize> = (0..coarse_n).map(|k| 2 * k + 1).collect();
    // augmented coarse coordinates: boundary, interior points, boundary
    let coords: Vec<f64> = std::iter::once(0.0)
        .chain((0..coarse_n).map(|k| 2.0 * (k as f64 + 1.0)))
        .chain(std::iter::once(fine_n as f64 + 1.0))
        .collect();
    let n_aug = coords.len();
    let mut stencils = Vec::with_capacity(fine_n);
    for i in 0..fine_n {
        if i % 2 == 1 {
            stencils.push(Stencil {
                indices: vec![(i - 1) / 2],
                weights: vec![1.0],
            });
            continue;
        }
        let target = i as f64 + 1.0;
        // window of `order` consecutive augmented points around the target
        let below = coords.iter().filter(|&&c| c < target).count();
        let start = below
            .saturating_sub(order / 2)
            .min(n_aug.saturating_sub(order));
        let window = &coords[start..start + order];
        let weights = lagrange_weights(window, target);
        let mut idx = Vec::new();
        let mut wgt = Vec::new();
        for (off, &w) in weights.iter().enumerate() {
            let aug = start + off;
            if aug == 0 || aug == n_aug - 1 {
                continue; // boundary value is exactly zero
            }
            idx.push(aug - 1);
            wgt.push(w);
        }
        stencils.push(Stencil {
            indices: idx,
            weights: wgt,
        });
    }
    (stencils, inject)
}

/// Periodic stencils in fine-index coordinates: fine point `i` at
/// coordinate `i`, coarse point `k` at `2k`, indices wrap modulo the grid.
fn build_periodic_stencils(
    fine_n: usize,
    coarse_n: usize,
    order: usize,
) -> (Vec<Stencil>, Vec<usize>) {
    let inject: Vec<usize> = (0..coarse_n).map(|k| 2 * k).collect();
    let mut stencils = Vec::with_capacity(fine_n);
    for i in 0..fine_n {
        if i % 2 == 0 {
            stencils.push(Stencil {
                indices: vec![i / 2],
                weights: vec![1.0],
            });
            continue;
        }
        let target = i as f64;
        // nearest coarse point below is k0 = (i - 1) / 2; take order/2 on
        // each side and unwrap coordinates to stay monotone
        let k0 = (i as isize - 1) / 2;
        let first = k0 - order as isize / 2 + 1;
        let mut positions = Vec::with_capacity(order);
        let mut indices = Vec::with_capacity(order);
        for off in 0..order as isize {
            let k = first + off;
            positions.push(2.0 * k as f64);
            indices.push(k.rem_euclid(coarse_n as isize) as usize);
        }
        let weights = lagrange_weights(&positions, target);
        stencils.push(Stencil {
            indices,
            weights,
        });
    }
    (stencils, inject)
}

/// Lagrange transfer matrices between two collocation node sets.
///
/// Interpolation rows evaluate the coarse-node polynomial at the fine nodes;
/// restriction rows evaluate the fine-node polynomial at the coarse nodes.
/// Every row of either matrix sums to one, and equal node sets give exact
/// identity matrices.
#[derive(Debug, Clone)]
pub struct TemporalTransfer {
    fine_nodes: Vec<f64>,
    coarse_nodes: Vec<f64>,
    interpolation: Mat,
    restriction: Mat,
}

impl TemporalTransfer {
    pub fn new(fine_nodes: &[f64], coarse_nodes: &[f64]) -> Result<Self> {
        if coarse_nodes.len() > fine_nodes.len() {
            return Err(Error::InvalidArgument(
                "coarse node set larger than the fine one".into(),
            ));
        }
        let interpolation = lagrange_eval_matrix(coarse_nodes, fine_nodes);
        let restriction = lagrange_eval_matrix(fine_nodes, coarse_nodes);
        Ok(Self {
            fine_nodes: fine_nodes.to_vec(),
            coarse_nodes: coarse_nodes.to_vec(),
            interpolation,
            restriction,
        })
    }

    pub fn fine_count(&self) -> usize {
        self.fine_nodes.len()
    }

    pub fn coarse_count(&self) -> usize {
        self.coarse_nodes.len()
    }

    pub fn interpolation(&self) -> &Mat {
        &self.interpolation
    }

    pub fn restriction(&self) -> &Mat {
        &self.restriction
    }
}

/// Rows evaluate the Lagrange basis of `source_nodes` at `targets`.
fn lagrange_eval_matrix(source_nodes: &[f64], targets: &[f64]) -> Mat {
    let mut m = Mat::zeros(targets.len(), source_nodes.len());
    for (r, &t) in targets.iter().enumerate() {
        let w = lagrange_weights(source_nodes, t);
        for (c, &v) in w.iter().enumerate() {
            m[(r, c)] = v;
        }
    }
    m
}

/// Applies a temporal transfer matrix across the node blocks of `u`.
fn apply_temporal(mat: &Mat, u: &NodeVector) -> NodeVector {
    let n = u.dim();
    let mut out = NodeVector::zeros(mat.rows(), n);
    for r in 0..mat.rows() {
        let coeffs = mat.row(r);
        let block = out.node_mut(r);
        for (j, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let src = u.node(j);
            for i in 0..n {
                block[i] += c * src[i];
            }
        }
    }
    out
}

/// One level of the hierarchy: the problem, its quadrature tables and its
/// preconditioner.
pub struct Level {
    pub problem: Arc<dyn IvpProblem>,
    pub tables: QuadratureTables,
    pub q_delta: QDeltaMatrix,
}

impl Level {
    pub fn new(problem: Arc<dyn IvpProblem>, tables: QuadratureTables, q_delta: QDeltaMatrix) -> Self {
        Self {
            problem,
            tables,
            q_delta,
        }
    }

    fn num_nodes(&self) -> usize {
        self.tables.num_nodes()
    }
}

/// Fine and coarse levels plus the transfer operators between them.
///
/// With both transfers absent the levels must be identical in shape; this
/// degenerate mode exists for testing and reduces one MLSDC iteration to two
/// consecutive SDC sweeps.
pub struct LevelHierarchy {
    pub fine: Level,
    pub coarse: Level,
    pub spatial: Option<SpatialTransfer>,
    pub temporal: Option<TemporalTransfer>,
    pub node_tol: f64,
    pub max_newton: usize,
}

impl LevelHierarchy {
    pub fn new(
        fine: Level,
        coarse: Level,
        spatial: Option<SpatialTransfer>,
        temporal: Option<TemporalTransfer>,
        node_tol: f64,
        max_newton: usize,
    ) -> Result<Self> {
        if !(node_tol > 0.0) || max_newton == 0 {
            return Err(Error::InvalidArgument(
                "node tolerance must be positive and the iteration cap nonzero".into(),
            ));
        }
        match &spatial {
            Some(s) => {
                ensure_dim(s.fine_dim(), fine.problem.dimension())?;
                ensure_dim(s.coarse_dim(), coarse.problem.dimension())?;
            }
            None => {
                ensure_dim(fine.problem.dimension(), coarse.problem.dimension())?;
            }
        }
        match &temporal {
            Some(t) => {
                ensure_dim(t.fine_count(), fine.num_nodes())?;
                ensure_dim(t.coarse_count(), coarse.num_nodes())?;
            }
            None => {
                ensure_dim(fine.num_nodes(), coarse.num_nodes())?;
            }
        }
        Ok(Self {
            fine,
            coarse,
            spatial,
            temporal,
            node_tol,
            max_newton,
        })
    }

    /// Restriction of a single state vector (used for the coarse initial
    /// value).
    pub fn restrict_state(&self, u: &[f64]) -> Result<Vec<f64>> {
        match &self.spatial {
            Some(s) => s.restrict_state(u),
            None => Ok(u.to_vec()),
        }
    }
}

/// Restriction of a node vector: a temporal Lagrange restriction across node
/// blocks followed by spatial injection within each block. The two act on
/// different axes, so their order is immaterial.
pub fn restrict(hierarchy: &LevelHierarchy, u_fine: &NodeVector) -> Result<NodeVector> {
    ensure_dim(hierarchy.fine.problem.dimension(), u_fine.dim())?;
    ensure_dim(hierarchy.fine.num_nodes(), u_fine.num_nodes())?;
    let after_time = match &hierarchy.temporal {
        Some(t) => apply_temporal(t.restriction(), u_fine),
        None => u_fine.clone(),
    };
    let out = match &hierarchy.spatial {
        Some(s) => {
            let mut v = NodeVector::zeros(after_time.num_nodes(), s.coarse_dim());
            for m in 0..after_time.num_nodes() {
                let coarse = s.restrict_state(after_time.node(m))?;
                v.node_mut(m).copy_from_slice(&coarse);
            }
            v
        }
        None => after_time,
    };
    Ok(out)
}

/// Interpolation of a node vector: spatial piecewise Lagrange interpolation
/// within blocks, then temporal Lagrange interpolation across blocks.
pub fn interpolate(hierarchy: &LevelHierarchy, u_coarse: &NodeVector) -> Result<NodeVector> {
    ensure_dim(hierarchy.coarse.problem.dimension(), u_coarse.dim())?;
    ensure_dim(hierarchy.coarse.num_nodes(), u_coarse.num_nodes())?;
    let after_space = match &hierarchy.spatial {
        Some(s) => {
            let mut v = NodeVector::zeros(u_coarse.num_nodes(), s.fine_dim());
            for m in 0..u_coarse.num_nodes() {
                let fine = s.interpolate_state(u_coarse.node(m))?;
                v.node_mut(m).copy_from_slice(&fine);
            }
            v
        }
        None => u_coarse.clone(),
    };
    let out = match &hierarchy.temporal {
        Some(t) => apply_temporal(t.interpolation(), &after_space),
        None => after_space,
    };
    Ok(out)
}

/// FAS correction term
/// `tau = restrict(dt Q_h F_h(U_h)) - dt Q_H F_H(restrict(U_h))`,
/// the difference between the restricted fine quadrature term and the coarse
/// quadrature of the restricted iterate.
pub fn compute_tau(hierarchy: &LevelHierarchy, u_fine: &NodeVector, dt: f64) -> Result<NodeVector> {
    let fine = &hierarchy.fine;
    let coarse = &hierarchy.coarse;
    ensure_dim(fine.problem.dimension(), u_fine.dim())?;
    ensure_dim(fine.num_nodes(), u_fine.num_nodes())?;

    let mut f_fine = NodeVector::zeros(u_fine.num_nodes(), u_fine.dim());
    for m in 0..u_fine.num_nodes() {
        let f = fine.problem.eval_f(u_fine.node(m))?;
        f_fine.node_mut(m).copy_from_slice(&f);
    }
    let fine_quad = apply_kron(fine.tables.q(), &f_fine, dt);
    let restricted_quad = restrict(hierarchy, &fine_quad)?;

    let u_coarse = restrict(hierarchy, u_fine)?;
    let mut f_coarse = NodeVector::zeros(u_coarse.num_nodes(), u_coarse.dim());
    for m in 0..u_coarse.num_nodes() {
        let f = coarse.problem.eval_f(u_coarse.node(m))?;
        f_coarse.node_mut(m).copy_from_slice(&f);
    }
    let coarse_quad = apply_kron(coarse.tables.q(), &f_coarse, dt);

    let mut tau = restricted_quad;
    for i in 0..tau.data().len() {
        tau.data_mut()[i] -= coarse_quad.data()[i];
    }
    Ok(tau)
}

fn annotate_step(e: Error, step: &str) -> Error {
    match e {
        Error::SolverFailure {
            context,
            residual,
            iterations,
        } => Error::SolverFailure {
            context: format!("{context} ({step})"),
            residual,
            iterations,
        },
        other => other,
    }
}

/// One MLSDC iteration: tau correction, one coarse sweep of the modified
/// collocation problem starting from the restricted iterate, the coarse-level
/// correction, and one fine sweep.
pub fn mlsdc_iteration(
    hierarchy: &LevelHierarchy,
    u_fine: &NodeVector,
    u0_fine: &[f64],
    dt: f64,
) -> Result<NodeVector> {
    ensure_dim(hierarchy.fine.problem.dimension(), u0_fine.len())?;

    // step 1: tau correction
    let tau = compute_tau(hierarchy, u_fine, dt).map_err(|e| annotate_step(e, "mlsdc step 1"))?;

    // step 2: coarse sweep of the modified problem from the restricted iterate
    let u_coarse_start = restrict(hierarchy, u_fine)?;
    let u0_coarse = hierarchy.restrict_state(u0_fine)?;
    let u_coarse_half = sdc_sweep(
        hierarchy.coarse.problem.as_ref(),
        &hierarchy.coarse.tables,
        hierarchy.coarse.q_delta.matrix(),
        dt,
        &u0_coarse,
        &u_coarse_start,
        Some(&tau),
        hierarchy.node_tol,
        hierarchy.max_newton,
    )
    .map_err(|e| annotate_step(e, "mlsdc step 2"))?;

    // step 3: coarse-level correction
    let mut correction = u_coarse_half.clone();
    for i in 0..correction.data().len() {
        correction.data_mut()[i] -= u_coarse_start.data()[i];
    }
    let lifted = interpolate(hierarchy, &correction).map_err(|e| annotate_step(e, "mlsdc step 3"))?;
    let mut u_half = u_fine.clone();
    for i in 0..u_half.data().len() {
        u_half.data_mut()[i] += lifted.data()[i];
    }

    // step 4: fine sweep of the original problem
    sdc_sweep(
        hierarchy.fine.problem.as_ref(),
        &hierarchy.fine.tables,
        hierarchy.fine.q_delta.matrix(),
        dt,
        u0_fine,
        &u_half,
        None,
        hierarchy.node_tol,
        hierarchy.max_newton,
    )
    .map_err(|e| annotate_step(e, "mlsdc step 4"))
}

/// Runs `k_max` MLSDC iterations and returns all fine-level iterates.
pub fn run_mlsdc(
    hierarchy: &LevelHierarchy,
    u0: &[f64],
    guess: &InitialGuess,
    k_max: usize,
    dt: f64,
) -> Result<Vec<NodeVector>> {
    let first = crate::sweeper::make_initial_guess(
        hierarchy.fine.problem.as_ref(),
        hierarchy.fine.num_nodes(),
        guess,
    );
    run_mlsdc_from(hierarchy, u0, first, k_max, dt)
}

pub(crate) fn run_mlsdc_from(
    hierarchy: &LevelHierarchy,
    u0: &[f64],
    first: NodeVector,
    k_max: usize,
    dt: f64,
) -> Result<Vec<NodeVector>> {
    let mut iterates = Vec::with_capacity(k_max + 1);
    iterates.push(first);
    let mut guard = DivergenceGuard::new();
    for k in 0..k_max {
        let next = mlsdc_iteration(hierarchy, &iterates[k], u0, dt)?;
        guard.observe(k + 1, next.sup_distance(&iterates[k]))?;
        iterates.push(next);
    }
    Ok(iterates)
}

/// Convenience builders for the hierarchies used in the studies.
impl LevelHierarchy {
    /// Both levels identical; transfers degenerate to identities.
    pub fn identical(
        problem: Arc<dyn IvpProblem>,
        num_nodes: usize,
        kind: crate::collocation::PreconditionerKind,
        node_tol: f64,
        max_newton: usize,
    ) -> Result<Self> {
        let tables = QuadratureTables::radau_right(num_nodes)?;
        let q_delta = crate::collocation::compute_q_delta(kind, tables.nodes(), Some(tables.q()))?;
        let fine = Level::new(problem.clone(), tables.clone(), q_delta.clone());
        let coarse = Level::new(problem, tables, q_delta);
        Self::new(fine, coarse, None, None, node_tol, max_newton)
    }

    /// Spatial coarsening: same node count on both levels, nested grids.
    #[allow(clippy::too_many_arguments)]
    pub fn spatial_coarsening(
        fine_problem: Arc<dyn IvpProblem>,
        coarse_problem: Arc<dyn IvpProblem>,
        num_nodes: usize,
        kind: crate::collocation::PreconditionerKind,
        boundary: Boundary,
        fine_axis: usize,
        coarse_axis: usize,
        order: usize,
        ndim: usize,
        node_tol: f64,
        max_newton: usize,
    ) -> Result<Self> {
        let tables = QuadratureTables::radau_right(num_nodes)?;
        let q_delta = crate::collocation::compute_q_delta(kind, tables.nodes(), Some(tables.q()))?;
        let spatial = SpatialTransfer::new(boundary, fine_axis, coarse_axis, order, ndim)?;
        let fine = Level::new(fine_problem, tables.clone(), q_delta.clone());
        let coarse = Level::new(coarse_problem, tables, q_delta);
        Self::new(fine, coarse, Some(spatial), None, node_tol, max_newton)
    }

    /// Temporal coarsening: fewer collocation nodes on the coarse level,
    /// same problem on both. The transfer uses full-order Lagrange
    /// polynomials, so the interpolation order equals the coarse node count.
    pub fn temporal_coarsening(
        problem: Arc<dyn IvpProblem>,
        fine_nodes: usize,
        coarse_nodes: usize,
        kind: crate::collocation::PreconditionerKind,
        node_tol: f64,
        max_newton: usize,
    ) -> Result<Self> {
        let fine_tables = QuadratureTables::radau_right(fine_nodes)?;
        let coarse_tables = QuadratureTables::radau_right(coarse_nodes)?;
        let fine_qd =
            crate::collocation::compute_q_delta(kind, fine_tables.nodes(), Some(fine_tables.q()))?;
        let coarse_qd = crate::collocation::compute_q_delta(
            kind,
            coarse_tables.nodes(),
            Some(coarse_tables.q()),
        )?;
        let temporal = TemporalTransfer::new(fine_tables.nodes(), coarse_tables.nodes())?;
        let fine = Level::new(problem.clone(), fine_tables, fine_qd);
        let coarse = Level::new(problem, coarse_tables, coarse_qd);
        Self::new(fine, coarse, None, Some(temporal), node_tol, max_newton)
    }
}
