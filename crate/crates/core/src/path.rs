//! Candidate generation over a grid of support sizes and ranks.
//!
//! The solver is projected gradient descent on ½‖Y − XB‖²: a gradient step at
//! step size `step_scale / λ_max(XᵀX)` followed by the Euclidean projection
//! onto the constraint set (keep the J largest rows, truncate the kept block
//! to rank r). Since the previous iterate is always feasible and the step
//! never exceeds 1/L, the objective cannot increase. Each cell's final
//! iterate is polished by an exact restricted least-squares refit on its
//! support, which makes the emitted candidates independent of the iteration
//! that found them.
//!
//! A single-response ℓ₁ path (`lasso_like_path`) is included for the fold
//! inconsistency audit; it is a plain cyclic coordinate descent.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::RegressionData;
use crate::error::{Error, Result};
use crate::linalg;
use crate::patterns::{reduced_rank_refit, CandidateModel};

/// Grid and iteration controls for the thresholding solver.
///
/// `Default` supplies the iteration parameters with empty grids; fill the
/// grids by hand or use [`PathConfig::for_data`] for the standard ones.
#[derive(Debug, Clone, Serialize)]
pub struct PathConfig {
    /// Support sizes to visit, each in 1..=p.
    pub j_grid: Vec<usize>,
    /// Ranks to visit, each in 1..=m; ranks above min(J, m) are clamped per cell.
    pub r_grid: Vec<usize>,
    pub max_iter: usize,
    /// Gradient step as a fraction of 1/λ_max(XᵀX); must lie in (0, 1].
    pub step_scale: f64,
    /// Relative objective-decrease threshold that counts as converged.
    pub tol: f64,
    /// Carried into reports for provenance; the solver itself is deterministic.
    pub seed: u64,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            j_grid: Vec::new(),
            r_grid: Vec::new(),
            max_iter: 500,
            step_scale: 1.0,
            tol: 1e-10,
            seed: 0,
        }
    }
}

impl PathConfig {
    /// Standard grids for an n×p design with m responses: support sizes
    /// 1..=min(p, n−1) thinned to at most 50 points, ranks 1..=min(m, max J).
    pub fn for_data(n: usize, p: usize, m: usize) -> Result<Self> {
        let j_max = p.min(n.saturating_sub(1));
        if j_max == 0 || m == 0 {
            return Err(Error::InvalidParameter(format!(
                "PathConfig::for_data: no feasible grid for n = {n}, p = {p}, m = {m}"
            )));
        }
        Ok(PathConfig {
            j_grid: thin_grid(1, j_max, 50),
            r_grid: (1..=m.min(j_max)).collect(),
            ..PathConfig::default()
        })
    }

    fn validate_solver(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "PathConfig: max_iter must be at least 1".into(),
            ));
        }
        if !(self.step_scale > 0.0 && self.step_scale <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "PathConfig: step_scale {} outside (0, 1]",
                self.step_scale
            )));
        }
        if !self.tol.is_finite() || self.tol < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "PathConfig: tol {} must be finite and nonnegative",
                self.tol
            )));
        }
        Ok(())
    }

    pub(crate) fn validate_grids(&self, p: usize, m: usize) -> Result<()> {
        if self.j_grid.is_empty() || self.r_grid.is_empty() {
            return Err(Error::InvalidParameter(
                "PathConfig: empty J or r grid".into(),
            ));
        }
        if let Some(&j) = self.j_grid.iter().find(|&&j| j == 0 || j > p) {
            return Err(Error::InvalidParameter(format!(
                "PathConfig: support size {j} outside 1..={p}"
            )));
        }
        if let Some(&r) = self.r_grid.iter().find(|&&r| r == 0 || r > m) {
            return Err(Error::InvalidParameter(format!(
                "PathConfig: rank {r} outside 1..={m}"
            )));
        }
        Ok(())
    }
}

/// Evenly spaced integer grid from lo..=hi with at most `max_len` points,
/// always keeping both endpoints.
fn thin_grid(lo: usize, hi: usize, max_len: usize) -> Vec<usize> {
    let len = hi - lo + 1;
    if len <= max_len {
        return (lo..=hi).collect();
    }
    let mut out: Vec<usize> = (0..max_len)
        .map(|i| {
            let t = i as f64 * (len - 1) as f64 / (max_len - 1) as f64;
            lo + t.round() as usize
        })
        .collect();
    out.dedup();
    out
}

/// One converged (or budget-capped) fit at a single grid cell.
#[derive(Debug, Clone)]
pub struct PathFit {
    /// Polished candidate: exact restricted least squares on the support the
    /// iteration found.
    pub model: CandidateModel,
    /// ‖Y − XB‖² of the polished model.
    pub rss: f64,
    /// ‖Y − XB‖² of the final pre-polish iterate.
    pub pre_polish_rss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Present when the iteration budget ran out before the tolerance was met.
    pub note: Option<String>,
}

/// Shared per-dataset quantities: Gram matrix, cross products, the largest
/// eigenvalue of XᵀX (the gradient's Lipschitz constant), and ‖Y‖².
struct IhtWorkspace {
    xtx: DMatrix<f64>,
    xty: DMatrix<f64>,
    y_ss: f64,
    lip: f64,
}

impl IhtWorkspace {
    fn new(data: &RegressionData) -> Result<Self> {
        let x = data.x();
        let xtx = x.transpose() * x;
        let xty = x.transpose() * data.y();
        let y_ss = data.y().iter().map(|v| v * v).sum();
        let lip = xtx
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(0.0f64, |acc, &e| acc.max(e));
        if !lip.is_finite() || lip <= 0.0 {
            return Err(Error::DegenerateDesign { ratio: 0.0 });
        }
        Ok(IhtWorkspace { xtx, xty, y_ss, lip })
    }

    /// ‖Y − XB‖² through the precomputed factors; clamped at zero because the
    /// three-term expansion can go slightly negative near an exact fit.
    fn objective(&self, b: &DMatrix<f64>) -> f64 {
        let quad = b.dot(&(&self.xtx * b));
        let cross = b.dot(&self.xty);
        (self.y_ss - 2.0 * cross + quad).max(0.0)
    }

    fn gradient_step(&self, b: &DMatrix<f64>, step: f64) -> DMatrix<f64> {
        b + step * (&self.xty - &self.xtx * b)
    }
}

/// Euclidean projection onto {B : at most j nonzero rows, rank ≤ r}: keep the
/// j largest rows by norm (ties to the lower index) and truncate the kept
/// block's SVD. Exact zeros everywhere off the kept rows.
fn project_to_cell(b: &DMatrix<f64>, j: usize, r: usize) -> DMatrix<f64> {
    let (p, m) = b.shape();
    let norms = linalg::row_norms(b);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &c| norms[c].total_cmp(&norms[a]).then(a.cmp(&c)));
    let mut keep: Vec<usize> = order.into_iter().take(j).collect();
    keep.sort_unstable();
    let block = linalg::select_rows(b, &keep);
    let block = if r < keep.len().min(m) {
        truncate_rank(block, r)
    } else {
        block
    };
    let mut out = DMatrix::zeros(p, m);
    for (i, &row) in keep.iter().enumerate() {
        out.set_row(row, &block.row(i));
    }
    out
}

/// Best rank-r approximation by keeping the top r singular triplets.
fn truncate_rank(block: DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let (rows, cols) = block.shape();
    let svd = block.svd(true, true);
    let u = svd.u.as_ref().expect("SVD with vectors requested");
    let vt = svd.v_t.as_ref().expect("SVD with vectors requested");
    let mut out = DMatrix::zeros(rows, cols);
    for k in 0..r {
        let s = svd.singular_values[k];
        if s <= 0.0 {
            break;
        }
        out += s * u.column(k) * vt.row(k);
    }
    out
}

/// Iterate one cell to convergence or budget. The warm start is projected
/// into the cell's constraint set first so every step starts feasible; a
/// non-descending step is rejected, which makes the accepted objective
/// sequence nonincreasing unconditionally.
fn iterate_cell(
    ws: &IhtWorkspace,
    p: usize,
    m: usize,
    j: usize,
    r: usize,
    cfg: &PathConfig,
    warm: Option<&DMatrix<f64>>,
) -> (DMatrix<f64>, f64, usize, bool) {
    let step = cfg.step_scale / ws.lip;
    let mut b = match warm {
        Some(w) => project_to_cell(w, j, r),
        None => DMatrix::zeros(p, m),
    };
    let mut obj = ws.objective(&b);
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=cfg.max_iter {
        iterations = it;
        let next = project_to_cell(&ws.gradient_step(&b, step), j, r);
        let next_obj = ws.objective(&next);
        if next_obj > obj {
            // Row selection followed by rank truncation is not the exact
            // joint projection, so a step can fail to descend even at 1/L.
            // Rejecting it keeps the accepted sequence monotone.
            converged = true;
            break;
        }
        let drop = obj - next_obj;
        b = next;
        obj = next_obj;
        if drop <= cfg.tol * (1.0 + obj) {
            converged = true;
            break;
        }
    }
    (b, obj, iterations, converged)
}

/// Polish the final iterate: exact restricted least squares on its support at
/// the cell's rank. The iterate is feasible for that refit, so the objective
/// cannot go up.
fn fit_cell(
    data: &RegressionData,
    ws: &IhtWorkspace,
    j: usize,
    r: usize,
    cfg: &PathConfig,
    warm: Option<&DMatrix<f64>>,
) -> Result<PathFit> {
    let (b, pre_polish_rss, iterations, converged) =
        iterate_cell(ws, data.p(), data.m(), j, r, cfg, warm);
    let support: Vec<usize> = (0..data.p())
        .filter(|&i| b.row(i).iter().any(|v| *v != 0.0))
        .collect();
    if support.is_empty() {
        return Err(Error::EmptyModel);
    }
    let r_fit = r.min(support.len()).min(data.m());
    let model = reduced_rank_refit(data.x(), data.y(), &support, r_fit)?;
    let rss = model.rss(data.x(), data.y());
    debug_assert!(
        rss <= pre_polish_rss + 1e-7 * (1.0 + pre_polish_rss),
        "polish increased the objective: {pre_polish_rss} -> {rss}"
    );
    debug_assert!(model.cardinality() <= j && model.rank() <= r_fit);
    Ok(PathFit {
        model,
        rss,
        pre_polish_rss,
        iterations,
        converged,
        note: (!converged).then(|| "max_iter reached".to_string()),
    })
}

/// Hard-thresholded low-rank fit at one (J, r) cell, from a zero start.
/// Requires 1 ≤ J ≤ p and 1 ≤ r ≤ min(J, m); equality makes the rank
/// truncation vacuous, which is allowed.
pub fn group_iht_fit(
    data: &RegressionData,
    j: usize,
    r: usize,
    cfg: &PathConfig,
) -> Result<PathFit> {
    cfg.validate_solver()?;
    if j == 0 || j > data.p() {
        return Err(Error::InvalidParameter(format!(
            "group_iht_fit: support size {j} outside 1..={}",
            data.p()
        )));
    }
    if r == 0 || r > j.min(data.m()) {
        return Err(Error::InvalidParameter(format!(
            "group_iht_fit: rank {r} outside 1..={}",
            j.min(data.m())
        )));
    }
    let ws = IhtWorkspace::new(data)?;
    fit_cell(data, &ws, j, r, cfg, None)
}

/// One grid cell of a [`SolutionPath`]; `j` and `r` are the requested values
/// (the fit itself clamps r to min(J, m)).
#[derive(Debug)]
pub struct CellFit {
    pub j: usize,
    pub r: usize,
    pub outcome: Result<PathFit>,
}

/// Fits over the whole (J, r) grid in a deterministic order: ranks ascending,
/// supports descending within each rank chain.
#[derive(Debug)]
pub struct SolutionPath {
    cells: Vec<CellFit>,
}

impl SolutionPath {
    pub fn cells(&self) -> &[CellFit] {
        &self.cells
    }

    pub fn cell(&self, j: usize, r: usize) -> Option<&CellFit> {
        self.cells.iter().find(|c| c.j == j && c.r == r)
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }

    /// Successful fits deduplicated by (support, rank), in cell order.
    pub fn candidates(&self) -> Vec<CandidateModel> {
        let mut seen: HashSet<(Vec<usize>, usize)> = HashSet::new();
        let mut out = Vec::new();
        for cell in &self.cells {
            if let Ok(fit) = &cell.outcome {
                let key = (fit.model.pattern().support().to_vec(), fit.model.rank());
                if seen.insert(key) {
                    out.push(fit.model.clone());
                }
            }
        }
        out
    }

    /// Per-cell coefficient matrices in cell order (`None` for failed cells);
    /// the shape a fixed-parameter cross-validation learner wants.
    pub fn cell_coefficients(&self) -> Vec<Option<DMatrix<f64>>> {
        self.cells
            .iter()
            .map(|c| c.outcome.as_ref().ok().map(|f| f.model.coefficients().clone()))
            .collect()
    }
}

/// Run the solver over the full grid. Chains share warm starts along
/// decreasing J within each rank (zero start at the largest J); chains are
/// independent across ranks and run in parallel. Per-cell failures are
/// recorded in the cell, not raised.
pub fn solution_path(data: &RegressionData, cfg: &PathConfig) -> Result<SolutionPath> {
    cfg.validate_solver()?;
    cfg.validate_grids(data.p(), data.m())?;
    let ws = IhtWorkspace::new(data)?;
    let mut j_grid = cfg.j_grid.clone();
    j_grid.sort_unstable_by(|a, b| b.cmp(a));
    j_grid.dedup();
    let mut r_grid = cfg.r_grid.clone();
    r_grid.sort_unstable();
    r_grid.dedup();

    let chains: Vec<Vec<CellFit>> = r_grid
        .par_iter()
        .map(|&r| {
            let mut chain = Vec::with_capacity(j_grid.len());
            let mut warm: Option<DMatrix<f64>> = None;
            for &j in &j_grid {
                let r_eff = r.min(j).min(data.m());
                let outcome = fit_cell(data, &ws, j, r_eff, cfg, warm.as_ref());
                if let Ok(fit) = &outcome {
                    warm = Some(fit.model.coefficients().clone());
                }
                chain.push(CellFit { j, r, outcome });
            }
            chain
        })
        .collect();

    Ok(SolutionPath {
        cells: chains.into_iter().flatten().collect(),
    })
}

/// One point of the single-response ℓ₁ path.
#[derive(Debug, Clone)]
pub struct LassoFit {
    pub lambda: f64,
    pub coefficients: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Largest stationarity violation: active coordinates must satisfy
/// x_jᵀ(y − Xβ) = λ·sign(β_j), inactive ones |x_jᵀ(y − Xβ)| ≤ λ.
fn kkt_violation(grad: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    let mut worst = 0.0f64;
    for jj in 0..beta.len() {
        let g = grad[jj];
        let v = if beta[jj] != 0.0 {
            (g - lambda * beta[jj].signum()).abs()
        } else {
            (g.abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Cyclic coordinate descent for min ½‖y − Xβ‖² + λ‖β‖₁ over a λ grid.
/// Warm starts run internally from the largest λ down; results come back in
/// the caller's grid order. λ = 0 is allowed (plain least squares for p < n).
/// Failure to converge within the budget is flagged per fit, never raised.
pub fn lasso_like_path(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda_grid: &[f64],
    cfg: &PathConfig,
) -> Result<Vec<LassoFit>> {
    cfg.validate_solver()?;
    linalg::validate(x, "lasso_like_path: design")?;
    if y.len() != x.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "lasso_like_path: design has {} rows, response has {}",
            x.nrows(),
            y.len()
        )));
    }
    if let Some(row) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "lasso_like_path: response",
            row,
            col: 0,
        });
    }
    if lambda_grid.is_empty() {
        return Err(Error::InvalidParameter("lasso_like_path: empty λ grid".into()));
    }
    if let Some(&l) = lambda_grid.iter().find(|&&l| !l.is_finite() || l < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lasso_like_path: λ = {l} must be finite and nonnegative"
        )));
    }

    let p = x.ncols();
    let col_ss: Vec<f64> = (0..p).map(|jj| x.column(jj).norm_squared()).collect();
    let kkt_tol = cfg.tol * (1.0 + (x.transpose() * y).abs().max());

    let mut order: Vec<usize> = (0..lambda_grid.len()).collect();
    order.sort_by(|&a, &b| lambda_grid[b].total_cmp(&lambda_grid[a]).then(a.cmp(&b)));

    let mut beta: DVector<f64> = DVector::zeros(p);
    let mut fits: Vec<Option<LassoFit>> = vec![None; lambda_grid.len()];
    for &gi in &order {
        let lambda = lambda_grid[gi];
        let mut residual = y - x * &beta;
        let mut iterations = 0;
        let mut converged = false;
        for sweep in 1..=cfg.max_iter {
            iterations = sweep;
            let mut max_delta = 0.0f64;
            for jj in 0..p {
                if col_ss[jj] == 0.0 {
                    continue;
                }
                let xj = x.column(jj);
                let z = xj.dot(&residual) + col_ss[jj] * beta[jj];
                let new = soft_threshold(z, lambda) / col_ss[jj];
                let delta = new - beta[jj];
                if delta != 0.0 {
                    residual -= xj * delta;
                    beta[jj] = new;
                    max_delta = max_delta.max(delta.abs());
                }
            }
            if max_delta <= cfg.tol * (1.0 + beta.abs().max()) {
                let grad = x.transpose() * &residual;
                if kkt_violation(&grad, &beta, lambda) <= kkt_tol {
                    converged = true;
                    break;
                }
            }
        }
        fits[gi] = Some(LassoFit {
            lambda,
            coefficients: beta.clone(),
            iterations,
            converged,
        });
    }
    Ok(fits.into_iter().map(|f| f.expect("every grid point visited")).collect())
}
