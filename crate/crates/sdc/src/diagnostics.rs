//! Error norms, convergence-order estimation, contraction-factor fitting,
//! the Fourier tail-remainder smoothness metric, and the convergence-study
//! harness that drives SDC/MLSDC across step sizes.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex64, FftPlanner};

use crate::collocation::CollocationSpec;
use crate::error::{ensure_dim, Error, Result};
use crate::mlsdc::{run_mlsdc_from, LevelHierarchy};
use crate::problems::IvpProblem;
use crate::sweeper::{
    guess_for_step, guess_from_rng, reference_solution, run_sdc_from, solve_collocation,
    InitialGuess, NodeVector, SweepConfig,
};

/// Errors below this level are considered roundoff and excluded from slope
/// fits.
pub const ROUNDOFF_FLOOR: f64 = 1e-13;

/// Which reference an error series was measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    /// The solution of the collocation problem at the same step size.
    CollocationSolution,
    /// The exact (or high-order reference) solution at all nodes.
    ExactSolution,
    /// The exact value at the right endpoint, compared at the last node.
    LastNodeExact,
}

/// Sup-norm errors indexed by `(step size, iteration)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    step_sizes: Vec<f64>,
    errors: Vec<Vec<f64>>,
    reference: ReferenceKind,
}

impl ErrorSeries {
    pub fn new(
        step_sizes: Vec<f64>,
        errors: Vec<Vec<f64>>,
        reference: ReferenceKind,
    ) -> Result<Self> {
        if step_sizes.len() != errors.len() {
            return Err(Error::DimensionMismatch {
                expected: step_sizes.len(),
                actual: errors.len(),
            });
        }
        for w in step_sizes.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::InvalidArgument(
                    "step sizes must be strictly decreasing".into(),
                ));
            }
        }
        let width = errors.first().map_or(0, Vec::len);
        for row in &errors {
            if row.len() != width {
                return Err(Error::InvalidArgument("error table must be rectangular".into()));
            }
            for &e in row {
                if e < 0.0 {
                    return Err(Error::InvalidArgument("errors must be nonnegative".into()));
                }
            }
        }
        Ok(Self {
            step_sizes,
            errors,
            reference,
        })
    }

    pub fn step_sizes(&self) -> &[f64] {
        &self.step_sizes
    }

    /// Error at `(step index, iteration)`.
    pub fn error(&self, dt_index: usize, k: usize) -> f64 {
        self.errors[dt_index][k]
    }

    pub fn iterations(&self) -> usize {
        self.errors.first().map_or(0, Vec::len)
    }

    pub fn reference(&self) -> ReferenceKind {
        self.reference
    }

    /// Series of `(dt, error)` pairs for one iteration index.
    pub fn series_for(&self, k: usize) -> Vec<(f64, f64)> {
        self.step_sizes
            .iter()
            .zip(&self.errors)
            .map(|(&dt, row)| (dt, row[k]))
            .collect()
    }
}

/// Maximum-norm distance between two node vectors.
pub fn error_inf(u: &NodeVector, reference: &NodeVector) -> Result<f64> {
    if !u.same_shape(reference) {
        return Err(Error::DimensionMismatch {
            expected: reference.data().len(),
            actual: u.data().len(),
        });
    }
    Ok(u.sup_distance(reference))
}

/// Maximum-norm error of the last node block against the exact value at the
/// right endpoint.
pub fn last_node_error(u: &NodeVector, exact_at_t1: &[f64]) -> f64 {
    assert_eq!(u.dim(), exact_at_t1.len(), "state dimension mismatch");
    u.last_node()
        .iter()
        .zip(exact_at_t1)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

/// Result of a log-log order fit, including the points that were excluded
/// as roundoff or saturation.
#[derive(Debug, Clone)]
pub struct OrderFit {
    pub slope: f64,
    pub points_used: usize,
    /// `(dt, error)` pairs dropped from the fit.
    pub excluded: Vec<(f64, f64)>,
}

/// Least-squares slope of `log(error)` against `log(dt)`.
///
/// Points at or below `floor` are dropped as roundoff; when per-point
/// `saturation` levels are given (the accuracy of the collocation solution),
/// points within a factor of three of their level are dropped as saturated.
pub fn fit_order(
    series: &[(f64, f64)],
    floor: f64,
    saturation: Option<&[f64]>,
) -> Result<OrderFit> {
    if let Some(sat) = saturation {
        ensure_dim(series.len(), sat.len())?;
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = Vec::new();
    for (i, &(dt, err)) in series.iter().enumerate() {
        let saturated = saturation
            .map(|s| s[i].is_finite() && err <= 3.0 * s[i])
            .unwrap_or(false);
        if !err.is_finite() || err <= floor || saturated {
            excluded.push((dt, err));
        } else {
            xs.push(dt.ln());
            ys.push(err.ln());
        }
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            actual: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    Ok(OrderFit {
        slope,
        points_used: xs.len(),
        excluded,
    })
}

/// Fits the slope of `log(err_k / err_{k-1})` against `log(dt)`.
///
/// A slope near two indicates the improved MLSDC regime, a slope near one
/// the generic regime. Step sizes where `err_{k-1}` has fallen to the
/// roundoff floor are skipped.
pub fn contraction_slope(series: &ErrorSeries, k: usize) -> Result<f64> {
    if k == 0 || k >= series.iterations() {
        return Err(Error::InvalidArgument(format!(
            "iteration {k} out of range for contraction"
        )));
    }
    let mut pts = Vec::new();
    for (i, &dt) in series.step_sizes().iter().enumerate() {
        let prev = series.error(i, k - 1);
        let curr = series.error(i, k);
        if !prev.is_finite() || !curr.is_finite() || prev <= ROUNDOFF_FLOOR || curr <= ROUNDOFF_FLOOR
        {
            continue;
        }
        pts.push((dt, curr / prev));
    }
    if pts.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            actual: pts.len(),
        });
    }
    let fit = fit_order(&pts, 0.0, None)?;
    Ok(fit.slope)
}

/// Tail sums of discrete Fourier coefficient magnitudes, one per node.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierTail {
    cutoff: usize,
    remainders: Vec<f64>,
}

impl FourierTail {
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn remainders(&self) -> &[f64] {
        &self.remainders
    }

    pub fn max(&self) -> f64 {
        self.remainders.iter().fold(0.0, |m, &x| m.max(x))
    }
}

/// Unit-normalized DFT coefficient magnitudes of one real signal.
fn dft_magnitudes(signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft.process(&mut buf);
    let scale = 1.0 / (n as f64).sqrt();
    buf.iter().map(|c| c.norm() * scale).collect()
}

/// Sums coefficient magnitudes whose physical frequency `min(l, N - l)` is at
/// least the cutoff. Real-valued data carries each frequency at the index
/// pair `(l, N - l)`, so the fold makes a low-frequency signal yield a zero
/// tail.
fn folded_tail(mags: &[f64], cutoff: usize) -> f64 {
    let n = mags.len();
    mags.iter()
        .enumerate()
        .filter(|(l, _)| (*l).min(n - *l) >= cutoff)
        .map(|(_, &m)| m)
        .sum()
}

/// Fourier tail remainder of each node block of a one-dimensional grid
/// function.
pub fn fourier_tail(error: &NodeVector, cutoff: usize) -> Result<FourierTail> {
    let n = error.dim();
    if cutoff == 0 || cutoff > n {
        return Err(Error::InvalidArgument(format!(
            "cutoff {cutoff} out of range 1..={n}"
        )));
    }
    let remainders = (0..error.num_nodes())
        .map(|m| folded_tail(&dft_magnitudes(error.node(m)), cutoff))
        .collect();
    Ok(FourierTail { cutoff, remainders })
}

/// Per-axis variant for square grids; reports the maximum of the per-row and
/// per-column tails for each node. The one-dimensional definition is the
/// principled one, this aggregation is a heuristic for 2D output.
pub fn fourier_tail_2d(error: &NodeVector, cutoff: usize, axis_points: usize) -> Result<FourierTail> {
    ensure_dim(axis_points * axis_points, error.dim())?;
    if cutoff == 0 || cutoff > axis_points {
        return Err(Error::InvalidArgument(format!(
            "cutoff {cutoff} out of range 1..={axis_points}"
        )));
    }
    let n = axis_points;
    let remainders = (0..error.num_nodes())
        .map(|m| {
            let block = error.node(m);
            let mut worst = 0.0f64;
            for i in 0..n {
                let row = &block[i * n..(i + 1) * n];
                worst = worst.max(folded_tail(&dft_magnitudes(row), cutoff));
            }
            for j in 0..n {
                let col: Vec<f64> = (0..n).map(|i| block[i * n + j]).collect();
                worst = worst.max(folded_tail(&dft_magnitudes(&col), cutoff));
            }
            worst
        })
        .collect();
    Ok(FourierTail { cutoff, remainders })
}

/// Time framing of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeMode {
    /// One step per cell, `t_end = dt`; errors measure the local truncation
    /// behavior per iteration.
    SingleStep,
    /// March to a fixed end time with `t_end / dt` steps, a fixed number of
    /// iterations per step; errors measure the global order.
    FixedEnd(f64),
}

/// The iteration under study.
pub enum StudyMethod {
    Sdc {
        problem: Arc<dyn IvpProblem>,
        num_nodes: usize,
        config: SweepConfig,
    },
    Mlsdc { hierarchy: Arc<LevelHierarchy> },
}

impl StudyMethod {
    fn fine_problem(&self) -> &dyn IvpProblem {
        match self {
            StudyMethod::Sdc { problem, .. } => problem.as_ref(),
            StudyMethod::Mlsdc { hierarchy } => hierarchy.fine.problem.as_ref(),
        }
    }

    fn fine_nodes(&self) -> usize {
        match self {
            StudyMethod::Sdc { num_nodes, .. } => *num_nodes,
            StudyMethod::Mlsdc { hierarchy } => hierarchy.fine.tables.num_nodes(),
        }
    }
}

/// Grid layout for the Fourier-tail diagnostic of the initial error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierSpec {
    pub cutoff: usize,
    /// `None` treats the state as a 1D grid; `Some(n)` as an `n x n` grid.
    pub axis_points: Option<usize>,
}

/// Full description of one convergence study.
pub struct StudySpec {
    pub method: StudyMethod,
    pub dt_list: Vec<f64>,
    pub k_max: usize,
    pub guess: InitialGuess,
    pub time: TimeMode,
    pub collocation_tol: f64,
    pub fourier: Option<FourierSpec>,
    /// Accuracy for a computed last-node reference when the problem has no
    /// exact solution. `None` leaves those columns empty.
    pub reference_accuracy: Option<f64>,
}

impl StudySpec {
    fn validate(&self) -> Result<()> {
        if self.dt_list.is_empty() {
            return Err(Error::InvalidArgument("empty step-size list".into()));
        }
        for w in self.dt_list.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::InvalidArgument(
                    "step sizes must be strictly decreasing".into(),
                ));
            }
        }
        if !(self.collocation_tol > 0.0) {
            return Err(Error::InvalidArgument(
                "collocation tolerance must be positive".into(),
            ));
        }
        if let TimeMode::FixedEnd(t) = self.time {
            if !(t > 0.0) {
                return Err(Error::InvalidArgument("end time must be positive".into()));
            }
            for &dt in &self.dt_list {
                let steps = (t / dt).round();
                if steps < 1.0 || ((steps * dt - t) / t).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "step size {dt} does not divide the end time {t}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Raw per-step-size measurements of one study cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub dt: f64,
    pub diverged: bool,
    /// Per-iteration sup-norm errors; `NaN` where a reference is unavailable.
    pub err_coll: Vec<f64>,
    pub err_exact: Vec<f64>,
    pub err_last: Vec<f64>,
    /// Error of the collocation solution against the exact solution, the
    /// saturation level of per-iteration fits. `NaN` when unknown.
    pub coll_vs_exact: f64,
    /// Fourier tail of the initial error. `NaN` when not computed.
    pub e_max: f64,
    pub wall_ms: f64,
}

/// One denormalized output row per `(dt, k)` pair.
#[derive(Debug, Clone)]
pub struct StudyRecord {
    pub dt: f64,
    pub k: usize,
    pub err_coll: f64,
    pub err_exact: f64,
    pub err_last: f64,
    pub order_fit: f64,
    pub contraction_slope: f64,
    pub e_max: f64,
    pub wall_ms: f64,
    pub diverged: bool,
}

/// Assembled study results: error series, per-iteration order fits,
/// contraction slopes, and the record rows consumed by the front end.
pub struct StudyOutput {
    pub err_coll: Option<ErrorSeries>,
    pub err_exact: Option<ErrorSeries>,
    pub err_last: Option<ErrorSeries>,
    /// Order fit per iteration index (0 is the initial guess).
    pub order_fits: Vec<Option<OrderFit>>,
    /// Contraction slope per iteration index (entry 0 is always `None`).
    pub contraction: Vec<Option<f64>>,
    pub records: Vec<StudyRecord>,
    pub diverged: Vec<bool>,
}

fn derive_cell_seed(guess: &InitialGuess, cell: usize, lane: usize) -> u64 {
    let base = match guess {
        InitialGuess::Random { seed } => *seed,
        _ => 0,
    };
    base ^ (cell as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (lane as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Runs one `(dt)` cell of a study. Cells are independent and may execute
/// concurrently; identical inputs produce bit-identical results.
pub fn run_study_cell(spec: &StudySpec, cell: usize) -> Result<CellResult> {
    spec.validate()?;
    let dt = spec.dt_list[cell];
    let start = Instant::now();
    let result = match spec.time {
        TimeMode::SingleStep => single_step_cell(spec, cell, dt),
        TimeMode::FixedEnd(t_end) => fixed_end_cell(spec, cell, dt, t_end),
    };
    result.map(|mut r| {
        r.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        r
    })
}

fn nan_vec(len: usize) -> Vec<f64> {
    vec![f64::NAN; len]
}

fn single_step_cell(spec: &StudySpec, cell: usize, dt: f64) -> Result<CellResult> {
    let problem = spec.method.fine_problem();
    let m = spec.method.fine_nodes();
    let coll_spec = CollocationSpec::radau_right(m, 0.0, dt)?;
    let u0 = problem.initial_value();
    let u_coll = solve_collocation(problem, &coll_spec, &u0, spec.collocation_tol)?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_cell_seed(&spec.guess, cell, 0));
    let first = guess_from_rng(problem, m, &spec.guess, &mut rng);

    let iterates = match &spec.method {
        StudyMethod::Sdc {
            problem: p,
            config,
            ..
        } => {
            config.validate()?;
            let tables = crate::collocation::QuadratureTables::radau_right(m)?;
            let q_delta = crate::collocation::compute_q_delta(
                config.preconditioner,
                tables.nodes(),
                Some(tables.q()),
            )?;
            run_sdc_from(p.as_ref(), &tables, &q_delta, dt, &u0, first, config, spec.k_max)
        }
        StudyMethod::Mlsdc { hierarchy } => {
            run_mlsdc_from(hierarchy, &u0, first, spec.k_max, dt)
        }
    };

    let width = spec.k_max + 1;
    let iterates = match iterates {
        Ok(v) => v,
        Err(Error::Diverged { .. }) => {
            return Ok(CellResult {
                dt,
                diverged: true,
                err_coll: nan_vec(width),
                err_exact: nan_vec(width),
                err_last: nan_vec(width),
                coll_vs_exact: f64::NAN,
                e_max: f64::NAN,
                wall_ms: 0.0,
            })
        }
        Err(e) => return Err(e),
    };

    let tables = crate::collocation::QuadratureTables::radau_right(m)?;
    let exact_nodes = problem.exact_solution(0.0).map(|_| {
        let mut v = NodeVector::zeros(m, problem.dimension());
        for (node, &tau) in tables.nodes().iter().enumerate() {
            let e = problem.exact_solution(tau * dt).expect("exists at t = 0");
            v.node_mut(node).copy_from_slice(&e);
        }
        v
    });
    let exact_t1 = problem.exact_solution(dt);
    let reference_t1 = match (&exact_t1, spec.reference_accuracy) {
        (Some(e), _) => Some(e.clone()),
        (None, Some(acc)) => Some(reference_solution(problem, dt, acc)?),
        (None, None) => None,
    };

    let mut err_coll = Vec::with_capacity(width);
    let mut err_exact = Vec::with_capacity(width);
    let mut err_last = Vec::with_capacity(width);
    for it in &iterates {
        err_coll.push(it.sup_distance(&u_coll));
        err_exact.push(match &exact_nodes {
            Some(e) => it.sup_distance(e),
            None => f64::NAN,
        });
        err_last.push(match &reference_t1 {
            Some(e) => last_node_error(it, e),
            None => f64::NAN,
        });
    }
    let coll_vs_exact = match &exact_nodes {
        Some(e) => u_coll.sup_distance(e),
        None => f64::NAN,
    };

    let e_max = match &spec.fourier {
        Some(f) => {
            let mut diff = iterates[0].clone();
            for i in 0..diff.data().len() {
                diff.data_mut()[i] -= u_coll.data()[i];
            }
            match f.axis_points {
                Some(n) => fourier_tail_2d(&diff, f.cutoff, n)?.max(),
                None => fourier_tail(&diff, f.cutoff)?.max(),
            }
        }
        None => f64::NAN,
    };

    Ok(CellResult {
        dt,
        diverged: false,
        err_coll,
        err_exact,
        err_last,
        coll_vs_exact,
        e_max,
        wall_ms: 0.0,
    })
}

fn fixed_end_cell(spec: &StudySpec, cell: usize, dt: f64, t_end: f64) -> Result<CellResult> {
    let problem = spec.method.fine_problem();
    let m = spec.method.fine_nodes();
    let steps = (t_end / dt).round() as usize;
    let width = spec.k_max + 1;

    let target = match problem.exact_solution(t_end) {
        Some(e) => e,
        None => match spec.reference_accuracy {
            Some(acc) => reference_solution(problem, t_end, acc)?,
            None => {
                return Err(Error::InvalidArgument(
                    "fixed-end study needs an exact solution or a reference accuracy".into(),
                ))
            }
        },
    };

    let tables = crate::collocation::QuadratureTables::radau_right(m)?;
    let mut err_exact = nan_vec(width);
    let mut diverged = false;

    for k in 0..width {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_cell_seed(&spec.guess, cell, k + 1));
        let mut u = problem.initial_value();
        let mut failed = false;
        for _ in 0..steps {
            let first = guess_for_step(&u, m, &spec.guess, &mut rng);
            let iterates = match &spec.method {
                StudyMethod::Sdc {
                    problem: p, config, ..
                } => {
                    let q_delta = crate::collocation::compute_q_delta(
                        config.preconditioner,
                        tables.nodes(),
                        Some(tables.q()),
                    )?;
                    run_sdc_from(p.as_ref(), &tables, &q_delta, dt, &u, first, config, k)
                }
                StudyMethod::Mlsdc { hierarchy } => run_mlsdc_from(hierarchy, &u, first, k, dt),
            };
            match iterates {
                Ok(v) => u = v.last().unwrap().last_node().to_vec(),
                Err(Error::Diverged { .. }) => {
                    failed = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if failed {
            diverged = true;
        } else {
            err_exact[k] = u
                .iter()
                .zip(&target)
                .fold(0.0f64, |mx, (a, b)| mx.max((a - b).abs()));
        }
    }

    Ok(CellResult {
        dt,
        diverged,
        err_coll: nan_vec(width),
        err_exact: err_exact.clone(),
        err_last: err_exact,
        coll_vs_exact: f64::NAN,
        e_max: f64::NAN,
        wall_ms: 0.0,
    })
}

fn any_finite(cells: &[CellResult], pick: impl Fn(&CellResult) -> &Vec<f64>) -> bool {
    cells.iter().any(|c| pick(c).iter().any(|e| e.is_finite()))
}

fn build_series(
    cells: &[CellResult],
    pick: impl Fn(&CellResult) -> &Vec<f64>,
    kind: ReferenceKind,
) -> Option<ErrorSeries> {
    if !any_finite(cells, &pick) {
        return None;
    }
    ErrorSeries::new(
        cells.iter().map(|c| c.dt).collect(),
        cells.iter().map(|c| pick(c).clone()).collect(),
        kind,
    )
    .ok()
}

/// Combines per-cell measurements into series, order fits, contraction
/// slopes and record rows.
pub fn assemble_study(spec: &StudySpec, cells: Vec<CellResult>) -> Result<StudyOutput> {
    ensure_dim(spec.dt_list.len(), cells.len())?;
    let width = spec.k_max + 1;

    let err_coll = build_series(&cells, |c| &c.err_coll, ReferenceKind::CollocationSolution);
    let err_exact = build_series(&cells, |c| &c.err_exact, ReferenceKind::ExactSolution);
    let err_last = build_series(&cells, |c| &c.err_last, ReferenceKind::LastNodeExact);

    // per-iteration order fits against the exact reference (falls back to
    // the last-node reference when no exact solution exists)
    let fit_source = err_exact.as_ref().or(err_last.as_ref());
    let saturation: Vec<f64> = cells.iter().map(|c| c.coll_vs_exact).collect();
    let mut order_fits: Vec<Option<OrderFit>> = Vec::with_capacity(width);
    for k in 0..width {
        let fit = fit_source.and_then(|s| {
            fit_order(&s.series_for(k), ROUNDOFF_FLOOR, Some(&saturation)).ok()
        });
        order_fits.push(fit);
    }

    // contraction slopes against the collocation solution (falls back to the
    // exact-reference series in fixed-end studies)
    let contraction_source = err_coll.as_ref().or(err_exact.as_ref());
    let mut contraction: Vec<Option<f64>> = vec![None; width];
    for k in 1..width {
        contraction[k] = contraction_source.and_then(|s| contraction_slope(s, k).ok());
    }

    let mut records = Vec::with_capacity(cells.len() * width);
    for (i, cell) in cells.iter().enumerate() {
        for k in 0..width {
            records.push(StudyRecord {
                dt: spec.dt_list[i],
                k,
                err_coll: cell.err_coll[k],
                err_exact: cell.err_exact[k],
                err_last: cell.err_last[k],
                order_fit: order_fits[k].as_ref().map_or(f64::NAN, |f| f.slope),
                contraction_slope: contraction[k].unwrap_or(f64::NAN),
                e_max: cell.e_max,
                wall_ms: cell.wall_ms,
                diverged: cell.diverged,
            });
        }
    }

    Ok(StudyOutput {
        err_coll,
        err_exact,
        err_last,
        order_fits,
        contraction,
        records,
        diverged: cells.iter().map(|c| c.diverged).collect(),
    })
}

/// Runs every cell sequentially and assembles the output. Front ends that
/// parallelize run [`run_study_cell`] per step size and call
/// [`assemble_study`] themselves.
pub fn run_convergence_study(spec: &StudySpec) -> Result<StudyOutput> {
    spec.validate()?;
    let cells = (0..spec.dt_list.len())
        .map(|i| run_study_cell(spec, i))
        .collect::<Result<Vec<_>>>()?;
    assemble_study(spec, cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collocation::PreconditionerKind;
    use crate::problems::ZeroProblem;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn error_inf_trivial_cases() {
        let mut a = NodeVector::zeros(2, 3);
        let b = NodeVector::zeros(2, 3);
        assert_eq!(error_inf(&a, &b).unwrap(), 0.0);
        a.node_mut(1)[2] = 1e-3;
        assert_eq!(error_inf(&a, &b).unwrap(), 1e-3);
        let c = NodeVector::zeros(3, 3);
        assert!(error_inf(&a, &c).is_err());
    }

    #[test]
    fn error_inf_matches_entrywise_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut a = NodeVector::zeros(4, 7);
        let mut b = NodeVector::zeros(4, 7);
        for x in a.data_mut() {
            *x = rng.gen::<f64>() - 0.5;
        }
        for x in b.data_mut() {
            *x = rng.gen::<f64>() - 0.5;
        }
        let mut brute = 0.0f64;
        for i in 0..a.data().len() {
            brute = brute.max((a.data()[i] - b.data()[i]).abs());
        }
        assert_eq!(error_inf(&a, &b).unwrap(), brute);
    }

    #[test]
    fn last_node_error_cases() {
        let mut u = NodeVector::spread(&[1.0, 2.0], 3);
        assert_eq!(last_node_error(&u, &[1.0, 2.0]), 0.0);
        u.node_mut(2)[0] += 1e-4;
        assert_abs_diff_eq!(last_node_error(&u, &[1.0, 2.0]), 1e-4, epsilon = 1e-15);
        // perturbing a non-terminal block changes nothing
        u.node_mut(0)[0] += 5.0;
        assert_abs_diff_eq!(last_node_error(&u, &[1.0, 2.0]), 1e-4, epsilon = 1e-15);
    }

    #[test]
    fn fit_order_recovers_synthetic_power_law() {
        let series: Vec<(f64, f64)> = (0..6)
            .map(|i| {
                let dt = 0.1 / 2.0f64.powi(i);
                (dt, 2.5 * dt.powi(3))
            })
            .collect();
        let fit = fit_order(&series, ROUNDOFF_FLOOR, None).unwrap();
        assert_abs_diff_eq!(fit.slope, 3.0, epsilon = 1e-10);
        assert_eq!(fit.points_used, 6);
    }

    #[test]
    fn fit_order_constant_errors_give_zero_slope() {
        let series: Vec<(f64, f64)> = (0..5)
            .map(|i| (0.1 / 2.0f64.powi(i), 0.125))
            .collect();
        let fit = fit_order(&series, ROUNDOFF_FLOOR, None).unwrap();
        assert_abs_diff_eq!(fit.slope, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_order_excludes_floor_and_saturated_points() {
        let series = vec![
            (0.1, 1e-2),
            (0.05, 1e-3),
            (0.025, 1e-4),
            (0.0125, 1e-14),
            (0.00625, 1e-15),
        ];
        let fit = fit_order(&series, ROUNDOFF_FLOOR, None).unwrap();
        assert_eq!(fit.points_used, 3);
        assert_eq!(fit.excluded.len(), 2);

        // the saturated point sits within 3x of its ceiling
        let sat = vec![f64::NAN, f64::NAN, f64::NAN, f64::NAN, 1e-5];
        let series2 = vec![
            (0.1, 1e-2),
            (0.05, 1e-3),
            (0.025, 1e-4),
            (0.0125, 1e-5),
            (0.00625, 2e-5),
        ];
        let fit2 = fit_order(&series2, ROUNDOFF_FLOOR, Some(&sat)).unwrap();
        assert_eq!(fit2.points_used, 4);
    }

    #[test]
    fn fit_order_needs_three_points() {
        let series = vec![(0.1, 1e-2), (0.05, 1e-3)];
        assert!(matches!(
            fit_order(&series, ROUNDOFF_FLOOR, None),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn contraction_slope_on_synthetic_series() {
        // err_k = dt^{2k} gives slope 2; err_k = dt^k gives slope 1
        for (power, expected) in [(2.0, 2.0), (1.0, 1.0)] {
            let dts: Vec<f64> = (0..5).map(|i| 0.5 / 2.0f64.powi(i)).collect();
            let errors: Vec<Vec<f64>> = dts
                .iter()
                .map(|&dt| (0..4).map(|k| dt.powf(power * k as f64)).collect())
                .collect();
            let series =
                ErrorSeries::new(dts, errors, ReferenceKind::CollocationSolution).unwrap();
            for k in 1..4 {
                let slope = contraction_slope(&series, k).unwrap();
                assert_abs_diff_eq!(slope, expected, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn contraction_slope_rejects_floor_division() {
        let dts: Vec<f64> = (0..4).map(|i| 0.5 / 2.0f64.powi(i)).collect();
        let errors: Vec<Vec<f64>> = dts.iter().map(|_| vec![1e-16, 1e-16]).collect();
        let series = ErrorSeries::new(dts, errors, ReferenceKind::CollocationSolution).unwrap();
        assert!(matches!(
            contraction_slope(&series, 1),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn fourier_tail_of_low_mode_is_zero() {
        // mode kappa = 2 with cutoff above it
        let n = 32;
        let mut v = NodeVector::zeros(2, n);
        for node in 0..2 {
            for i in 0..n {
                v.node_mut(node)[i] =
                    (2.0 * std::f64::consts::PI * 2.0 * i as f64 / n as f64).sin();
            }
        }
        let tail = fourier_tail(&v, 5).unwrap();
        for &e in tail.remainders() {
            assert!(e <= 1e-12, "tail {e}");
        }
    }

    #[test]
    fn fourier_tail_of_high_mode_equals_its_magnitude() {
        // real mode of physical frequency 10 >= cutoff with total coefficient
        // magnitude c split over the index pair (10, n - 10)
        let n = 64;
        let c = 0.37;
        let mut v = NodeVector::zeros(1, n);
        for i in 0..n {
            v.node_mut(0)[i] = c / (n as f64).sqrt()
                * (2.0 * std::f64::consts::PI * 10.0 * i as f64 / n as f64).cos();
        }
        let tail = fourier_tail(&v, 5).unwrap();
        assert_abs_diff_eq!(tail.remainders()[0], c, epsilon = 1e-12);
    }

    #[test]
    fn fourier_tail_matches_naive_dft_oracle() {
        let n = 40;
        let cutoff = 7;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut v = NodeVector::zeros(3, n);
        for x in v.data_mut() {
            *x = rng.gen::<f64>() - 0.5;
        }
        let tail = fourier_tail(&v, cutoff).unwrap();
        for node in 0..3 {
            // naive O(N^2) transform
            let block = v.node(node);
            let mut expected = 0.0;
            for l in 0..n {
                if l.min(n - l) < cutoff {
                    continue;
                }
                let (mut re, mut im) = (0.0, 0.0);
                for (j, &x) in block.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * (l * j) as f64 / n as f64;
                    re += x * ang.cos();
                    im += x * ang.sin();
                }
                expected += (re * re + im * im).sqrt() / (n as f64).sqrt();
            }
            let got = tail.remainders()[node];
            assert!(
                (got - expected).abs() <= 1e-12 * expected.max(1.0),
                "node {node}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn fourier_tail_parseval_identity() {
        let n = 48;
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut v = NodeVector::zeros(2, n);
        for x in v.data_mut() {
            *x = rng.gen::<f64>() - 0.5;
        }
        for node in 0..2 {
            let mags = dft_magnitudes(v.node(node));
            let coeff_energy: f64 = mags.iter().map(|m| m * m).sum();
            let signal_energy: f64 = v.node(node).iter().map(|x| x * x).sum();
            assert!(
                ((coeff_energy - signal_energy) / signal_energy).abs() <= 1e-12,
                "parseval violated: {coeff_energy} vs {signal_energy}"
            );
        }
    }

    #[test]
    fn fourier_tail_nonincreasing_in_cutoff() {
        let n = 36;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut v = NodeVector::zeros(1, n);
        for x in v.data_mut() {
            *x = rng.gen::<f64>() - 0.5;
        }
        let mut prev = f64::INFINITY;
        for cutoff in 1..=n {
            let tail = fourier_tail(&v, cutoff).unwrap();
            assert!(tail.remainders()[0] <= prev + 1e-15);
            prev = tail.remainders()[0];
        }
        assert!(fourier_tail(&v, 0).is_err());
        assert!(fourier_tail(&v, n + 1).is_err());
    }

    #[test]
    fn fourier_tail_2d_low_mode_is_zero() {
        let n = 16;
        let mut v = NodeVector::zeros(1, n * n);
        for i in 0..n {
            for j in 0..n {
                let x = i as f64 / n as f64;
                let y = j as f64 / n as f64;
                v.node_mut(0)[i * n + j] = (2.0 * std::f64::consts::PI * 2.0 * x).sin()
                    * (2.0 * std::f64::consts::PI * 2.0 * y).sin();
            }
        }
        let tail = fourier_tail_2d(&v, 5, n).unwrap();
        assert!(tail.max() <= 1e-12);
    }

    #[test]
    fn zero_problem_study_has_all_zero_errors() {
        let p = Arc::new(ZeroProblem::new(3));
        let spec = StudySpec {
            method: StudyMethod::Sdc {
                problem: p,
                num_nodes: 3,
                config: SweepConfig::new(PreconditionerKind::RightRectangle),
            },
            dt_list: vec![0.4, 0.2, 0.1],
            k_max: 2,
            guess: InitialGuess::Spread,
            time: TimeMode::SingleStep,
            collocation_tol: 1e-13,
            fourier: None,
            reference_accuracy: None,
        };
        let out = run_convergence_study(&spec).unwrap();
        let coll = out.err_coll.unwrap();
        for i in 0..3 {
            for k in 0..=2 {
                assert_eq!(coll.error(i, k), 0.0);
            }
        }
        assert!(out.diverged.iter().all(|d| !d));
    }

    #[test]
    fn study_reruns_are_bit_identical() {
        let p = Arc::new(crate::problems::Heat1dProblem::new(0.1, 4, 31).unwrap());
        let make_spec = || StudySpec {
            method: StudyMethod::Sdc {
                problem: p.clone(),
                num_nodes: 3,
                config: SweepConfig::new(PreconditionerKind::RightRectangle),
            },
            dt_list: vec![0.02, 0.01, 0.005],
            k_max: 2,
            guess: InitialGuess::Random { seed: 99 },
            time: TimeMode::SingleStep,
            collocation_tol: 1e-12,
            fourier: Some(FourierSpec {
                cutoff: 10,
                axis_points: None,
            }),
            reference_accuracy: None,
        };
        let a = run_convergence_study(&make_spec()).unwrap();
        let b = run_convergence_study(&make_spec()).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            // bit-identical up to the wall-clock column
            assert_eq!(ra.dt.to_bits(), rb.dt.to_bits());
            assert_eq!(ra.k, rb.k);
            assert_eq!(ra.err_coll.to_bits(), rb.err_coll.to_bits());
            assert_eq!(ra.err_exact.to_bits(), rb.err_exact.to_bits());
            assert_eq!(ra.err_last.to_bits(), rb.err_last.to_bits());
            assert_eq!(ra.order_fit.to_bits(), rb.order_fit.to_bits());
            assert_eq!(ra.contraction_slope.to_bits(), rb.contraction_slope.to_bits());
            assert_eq!(ra.e_max.to_bits(), rb.e_max.to_bits());
        }
    }
}
