//! Monte-Carlo laboratory for the exact K-fold cross-validation identity of
//! pattern-restricted least squares: with the structural pattern held fixed
//! across folds, E[CV-Err] = E[Trn-Err] + D + U, where D is the refitting
//! variance surcharge and U a nonnegative underfitting surcharge that
//! vanishes whenever the pattern's span contains the truth.
//!
//! D has a closed form under Gaussian designs; for general row distributions
//! it is estimated by decorrelating the selected factor design and averaging
//! Tr{(ZᵀZ)⁻¹} over draws. U is evaluated from its defining regression
//! quantities: the fold-complement coefficient of the missed signal component
//! on the kept factors, its full-data counterpart, and the mean of the former.

use nalgebra::{Cholesky, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::patterns::{CandidateModel, StructuralPattern};
use crate::resampling::FoldPlan;

/// Closed-form D under Gaussian designs:
/// [(2−(r̄+1)/n)K − 1] / [(1−(r̄+1)/n)K − 1] · m·r̄·σ².
/// Infeasible when the denominator is nonpositive (the held-in sample is too
/// small relative to r̄ for the refit variance to be finite).
pub fn d_term_gaussian(n: usize, k: usize, r_bar: usize, m: usize, sigma: f64) -> Result<f64> {
    if n == 0 || r_bar == 0 || m == 0 {
        return Err(Error::InvalidParameter(
            "d_term_gaussian: n, r̄, m must be positive".into(),
        ));
    }
    if k < 2 || k > n {
        return Err(Error::InvalidParameter(format!(
            "d_term_gaussian: K = {k} outside 2..={n}"
        )));
    }
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "d_term_gaussian: sigma = {sigma} must be finite and nonnegative"
        )));
    }
    let ratio = (r_bar as f64 + 1.0) / n as f64;
    let denom = (1.0 - ratio) * k as f64 - 1.0;
    if denom <= 0.0 {
        return Err(Error::Infeasible(format!(
            "refit variance diverges: (1 − (r̄+1)/n)·K − 1 = {denom} ≤ 0"
        )));
    }
    let numer = (2.0 - ratio) * k as f64 - 1.0;
    Ok(numer / denom * m as f64 * r_bar as f64 * sigma * sigma)
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_err: f64,
    pub replications: usize,
    /// Draws rejected as numerically singular and replaced.
    pub discarded: usize,
}

fn spd_cholesky(covariance: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    linalg::validate(covariance, "covariance")?;
    if covariance.nrows() != covariance.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "covariance must be square, got {}×{}",
            covariance.nrows(),
            covariance.ncols()
        )));
    }
    Cholesky::new(covariance.clone()).ok_or_else(|| {
        Error::InvalidParameter("covariance is not positive-definite".into())
    })
}

fn standard_normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Rows i.i.d. N(0, LLᵀ) for a lower Cholesky factor L.
fn gaussian_rows(rng: &mut ChaCha8Rng, rows: usize, chol_l: &DMatrix<f64>) -> DMatrix<f64> {
    standard_normal_matrix(rng, rows, chol_l.nrows()) * chol_l.transpose()
}

/// Design-row sampler for i.i.d. N(0, Σ) rows, the reference case.
pub fn gaussian_rows_sampler(
    covariance: &DMatrix<f64>,
) -> Result<impl Fn(&mut ChaCha8Rng, usize) -> DMatrix<f64> + Sync> {
    let l = spd_cholesky(covariance)?.l();
    Ok(move |rng: &mut ChaCha8Rng, rows: usize| gaussian_rows(rng, rows, &l))
}

const DISCARD_CAP_PER_REP: usize = 200;

/// Monte-Carlo D for arbitrary i.i.d. design rows with covariance Σ:
/// m·r̄·σ²·(1 + (n/r̄)·E[Tr{(Z_{n−d}ᵀZ_{n−d})⁻¹}]), where Z is the selected
/// factor design decorrelated by ((SU)ᵀ Σ SU)^{−1/2} so its rows are
/// isotropic, and Z_{n−d} keeps one training complement's worth of rows.
/// Singular draws are discarded and resampled; more than 10% discards is an
/// error.
#[allow(clippy::too_many_arguments)]
pub fn d_term_general<F>(
    sampler: F,
    covariance: &DMatrix<f64>,
    pattern: &StructuralPattern,
    n: usize,
    k: usize,
    m: usize,
    sigma: f64,
    reps: usize,
    seed: u64,
) -> Result<McEstimate>
where
    F: Fn(&mut ChaCha8Rng, usize) -> DMatrix<f64> + Sync,
{
    if reps == 0 {
        return Err(Error::InvalidParameter("d_term_general: reps ≥ 1".into()));
    }
    if k < 2 || !n.is_multiple_of(k) {
        return Err(Error::InvalidParameter(format!(
            "d_term_general: K = {k} must be ≥ 2 and divide n = {n}"
        )));
    }
    if !sigma.is_finite() || sigma < 0.0 || m == 0 {
        return Err(Error::InvalidParameter(
            "d_term_general: bad sigma or m".into(),
        ));
    }
    spd_cholesky(covariance)?;
    if covariance.nrows() != pattern.ambient_dim() {
        return Err(Error::ShapeMismatch(format!(
            "d_term_general: covariance is {}×{} but the pattern lives in dimension {}",
            covariance.nrows(),
            covariance.ncols(),
            pattern.ambient_dim()
        )));
    }
    let r_bar = pattern.rank();
    let d = n / k;
    if n - d <= r_bar {
        return Err(Error::Infeasible(format!(
            "d_term_general: training complement n − d = {} is not larger than r̄ = {r_bar}",
            n - d
        )));
    }
    let o = pattern.selection_projection();
    let decorrelate = linalg::sym_inv_sqrt(&(o.transpose() * covariance * &o))?;

    let per_rep: Vec<(f64, usize)> = (0..reps)
        .into_par_iter()
        .map(|i| -> Result<(f64, usize)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let mut discards = 0usize;
            loop {
                let rows = sampler(&mut rng, n - d);
                let z = rows * &o * &decorrelate;
                // Roundoff can hand a rank-deficient gram matrix a tiny
                // positive pivot, so singularity is judged from Z itself.
                if linalg::numerical_rank(&z) == r_bar {
                    if let Some(chol) = Cholesky::new(z.transpose() * z) {
                        let trace = chol.inverse().trace();
                        if trace.is_finite() {
                            return Ok((trace, discards));
                        }
                    }
                }
                discards += 1;
                if discards > DISCARD_CAP_PER_REP {
                    return Err(Error::ExcessiveDiscards {
                        discarded: discards,
                        attempted: discards + 1,
                    });
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let discarded: usize = per_rep.iter().map(|(_, d)| d).sum();
    let attempted = reps + discarded;
    if discarded * 10 > attempted {
        return Err(Error::ExcessiveDiscards { discarded, attempted });
    }
    let scale = m as f64 * r_bar as f64 * sigma * sigma * (n as f64 / r_bar as f64);
    let traces: Vec<f64> = per_rep.iter().map(|(t, _)| *t).collect();
    let mean = traces.iter().sum::<f64>() / reps as f64;
    let sd = sample_sd(&traces);
    Ok(McEstimate {
        value: m as f64 * r_bar as f64 * sigma * sigma + scale * mean,
        std_err: scale * sd / (reps as f64).sqrt(),
        replications: reps,
        discarded,
    })
}

fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    var.max(0.0).sqrt()
}

/// The component of the truth the candidate pattern cannot represent:
/// M = 𝒫°B*, with 𝒫° the orthogonal projector onto the complement of
/// span(S*U*) ∩ span(SU) inside span(S*U*). `None` when the truth is fully
/// contained (overfitting pattern).
fn missed_component(
    pattern: &StructuralPattern,
    truth: &CandidateModel,
) -> Result<Option<DMatrix<f64>>> {
    let truth_sub = truth.pattern().subspace();
    let model_sub = pattern.subspace();
    let inter = linalg::subspace_intersection(&truth_sub, &model_sub)?;
    let comp = linalg::relative_complement(&truth_sub, &inter)?;
    if comp.is_trivial() {
        return Ok(None);
    }
    Ok(Some(linalg::orthogonal_projector(&comp) * truth.coefficients()))
}

/// The per-draw regression quantities that U is built from.
struct UDraw {
    /// Coefficient of the missed signal on the kept factors, first training
    /// complement only.
    fold_coef: DMatrix<f64>,
    /// Same regression on all n rows.
    full_coef: DMatrix<f64>,
    /// Gram matrix of the full factor design.
    gram: DMatrix<f64>,
}

fn u_draw(
    x: &DMatrix<f64>,
    o: &DMatrix<f64>,
    missed: &DMatrix<f64>,
    train: &[usize],
) -> Result<UDraw> {
    let w = x * o;
    let v = x * missed;
    let fold_coef = linalg::ols_fit(&linalg::select_rows(&w, train), &linalg::select_rows(&v, train))?;
    let full_coef = linalg::ols_fit(&w, &v)?;
    let gram = w.transpose() * &w;
    Ok(UDraw { fold_coef, full_coef, gram })
}

/// Per-draw U contributions around the plug-in mean of the fold coefficient:
/// ‖X_SU(B̄ − E B)‖² + ‖Σ_SU^{1/2}(B − E B)‖², with Σ_SU = n·(SU)ᵀΣ(SU).
fn u_values(draws: &[UDraw], sigma_su_half: &DMatrix<f64>) -> Vec<f64> {
    let reps = draws.len() as f64;
    let mut mean_fold = DMatrix::zeros(draws[0].fold_coef.nrows(), draws[0].fold_coef.ncols());
    for d in draws {
        mean_fold += &d.fold_coef;
    }
    mean_fold /= reps;
    draws
        .iter()
        .map(|d| {
            let diff_full = &d.full_coef - &mean_fold;
            let first = (diff_full.transpose() * &d.gram * &diff_full).trace();
            let diff_fold = &d.fold_coef - &mean_fold;
            let second = (sigma_su_half * diff_fold).norm_squared();
            debug_assert!(first >= 0.0 && second >= 0.0);
            first + second
        })
        .collect()
}

fn check_pattern_truth(
    covariance: &DMatrix<f64>,
    pattern: &StructuralPattern,
    truth: &CandidateModel,
    n: usize,
    k: usize,
) -> Result<()> {
    if k < 2 || !n.is_multiple_of(k) {
        return Err(Error::InvalidParameter(format!(
            "K = {k} must be ≥ 2 and divide n = {n}"
        )));
    }
    let p = pattern.ambient_dim();
    if covariance.nrows() != p || truth.coefficients().nrows() != p {
        return Err(Error::ShapeMismatch(format!(
            "covariance {}×{}, truth in dimension {}, pattern in dimension {p}",
            covariance.nrows(),
            covariance.ncols(),
            truth.coefficients().nrows()
        )));
    }
    Ok(())
}

/// Exact U under Gaussian designs. Conditioning the missed signal on the kept
/// factors makes both U summands inverse-Wishart averages, giving
/// U = r̄ · Tr{MᵀΣM − MᵀΣ SU ((SU)ᵀΣ SU)⁻¹ (SU)ᵀΣM} · (1 + n/(n−d−r̄−1))
/// with M the missed component of the truth. Zero iff the pattern contains
/// the truth.
pub fn u_term_gaussian(
    covariance: &DMatrix<f64>,
    pattern: &StructuralPattern,
    truth: &CandidateModel,
    n: usize,
    k: usize,
) -> Result<f64> {
    check_pattern_truth(covariance, pattern, truth, n, k)?;
    spd_cholesky(covariance)?;
    let r_bar = pattern.rank();
    let d = n / k;
    if n < d + r_bar + 2 {
        return Err(Error::Infeasible(format!(
            "u_term_gaussian: n − d − r̄ − 1 = {} ≤ 0",
            n as i64 - d as i64 - r_bar as i64 - 1
        )));
    }
    let Some(missed) = missed_component(pattern, truth)? else {
        return Ok(0.0);
    };
    let o = pattern.selection_projection();
    let a = o.transpose() * covariance * &o;
    let a_chol = Cholesky::new(a).ok_or(Error::DegenerateDesign { ratio: 0.0 })?;
    let sm = covariance * &missed;
    let om = o.transpose() * &sm;
    let schur = missed.transpose() * &sm - om.transpose() * a_chol.solve(&om);
    let slack = (n - d - r_bar - 1) as f64;
    Ok(r_bar as f64 * schur.trace() * (1.0 + n as f64 / slack))
}

/// Monte-Carlo U over Gaussian design draws. Shares the design stream with
/// [`verify_identity`] at the same seed (the design is drawn first from each
/// replication's generator), so the two runs see identical X matrices.
pub fn u_term(
    covariance: &DMatrix<f64>,
    pattern: &StructuralPattern,
    truth: &CandidateModel,
    n: usize,
    k: usize,
    reps: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_pattern_truth(covariance, pattern, truth, n, k)?;
    if reps == 0 {
        return Err(Error::InvalidParameter("u_term: reps ≥ 1".into()));
    }
    let chol_l = spd_cholesky(covariance)?.l();
    let Some(missed) = missed_component(pattern, truth)? else {
        return Ok(McEstimate {
            value: 0.0,
            std_err: 0.0,
            replications: reps,
            discarded: 0,
        });
    };
    let o = pattern.selection_projection();
    let sigma_su_half =
        linalg::sym_sqrt(&(o.transpose() * covariance * &o))? * (n as f64).sqrt();
    let plan = FoldPlan::contiguous(n, k)?;
    let train = plan.complement_indices(0);

    let draws: Vec<UDraw> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let x = gaussian_rows(&mut rng, n, &chol_l);
            u_draw(&x, &o, &missed, &train)
        })
        .collect::<Result<Vec<_>>>()?;

    let values = u_values(&draws, &sigma_su_half);
    let mean = values.iter().sum::<f64>() / reps as f64;
    Ok(McEstimate {
        value: mean,
        std_err: sample_sd(&values) / (reps as f64).sqrt(),
        replications: reps,
        discarded: 0,
    })
}

/// Configuration of one identity experiment: fixed candidate pattern, fixed
/// truth, Gaussian design rows N(0, covariance), noise entries N(0, σ²).
#[derive(Debug, Clone)]
pub struct IdentityConfig {
    pub covariance: DMatrix<f64>,
    pub pattern: StructuralPattern,
    pub truth: CandidateModel,
    pub n: usize,
    pub k: usize,
    pub sigma: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Outcome of an identity experiment. `mc_std_err` is the standard error of
/// the variance-reduced statistic gap − u computed on common random numbers,
/// which is what `closes` compares against D.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    /// Monte-Carlo mean of CV-Err − Trn-Err.
    pub empirical_gap: f64,
    pub d_formula: f64,
    /// Exact Gaussian U.
    pub u_formula: f64,
    /// Same-seed Monte-Carlo U.
    pub u_monte_carlo: f64,
    pub mc_std_err: f64,
    pub replications: usize,
    pub k: usize,
    pub seed: u64,
}

impl IdentityReport {
    /// Whether |gap − (D + U)| ≤ 4 standard errors, the acceptance tolerance.
    pub fn closes(&self) -> bool {
        let slack = 1e-12 * (1.0 + self.d_formula.abs() + self.u_formula.abs());
        (self.empirical_gap - self.d_formula - self.u_monte_carlo).abs()
            <= 4.0 * self.mc_std_err + slack
    }
}

/// Measure E[CV-Err] − E[Trn-Err] by direct simulation and compare with
/// D + U. Folds are contiguous blocks (n = dK). Replication i draws its
/// design and noise from a generator seeded with `seed + i`, so results do
/// not depend on scheduling.
pub fn verify_identity(cfg: &IdentityConfig) -> Result<IdentityReport> {
    check_pattern_truth(&cfg.covariance, &cfg.pattern, &cfg.truth, cfg.n, cfg.k)?;
    if cfg.reps == 0 {
        return Err(Error::InvalidParameter("verify_identity: reps ≥ 1".into()));
    }
    if !cfg.sigma.is_finite() || cfg.sigma < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "verify_identity: sigma = {} must be finite and nonnegative",
            cfg.sigma
        )));
    }
    let m = cfg.truth.coefficients().ncols();
    let r_bar = cfg.pattern.rank();
    let d_formula = if cfg.sigma == 0.0 {
        // Still validate feasibility so an impossible configuration errors.
        d_term_gaussian(cfg.n, cfg.k, r_bar, m, 1.0)?;
        0.0
    } else {
        d_term_gaussian(cfg.n, cfg.k, r_bar, m, cfg.sigma)?
    };
    let u_formula = u_term_gaussian(&cfg.covariance, &cfg.pattern, &cfg.truth, cfg.n, cfg.k)?;
    let chol_l = spd_cholesky(&cfg.covariance)?.l();
    let o = cfg.pattern.selection_projection();
    let missed = missed_component(&cfg.pattern, &cfg.truth)?;
    let sigma_su_half =
        linalg::sym_sqrt(&(o.transpose() * &cfg.covariance * &o))? * (cfg.n as f64).sqrt();
    let plan = FoldPlan::contiguous(cfg.n, cfg.k)?;
    let first_train = plan.complement_indices(0);

    struct Rep {
        gap: f64,
        u: Option<UDraw>,
    }

    let reps: Vec<Rep> = (0..cfg.reps)
        .into_par_iter()
        .map(|i| -> Result<Rep> {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
            let x = gaussian_rows(&mut rng, cfg.n, &chol_l);
            let noise = cfg.sigma * standard_normal_matrix(&mut rng, cfg.n, m);
            let y = &x * cfg.truth.coefficients() + noise;
            let w = &x * &o;
            let c_full = linalg::ols_fit(&w, &y)?;
            let trn = (&y - &w * &c_full).norm_squared();
            let mut cv = 0.0;
            for fold in 0..cfg.k {
                let val_rows = plan.fold_indices(fold);
                let train_rows = plan.complement_indices(fold);
                let c_fold = linalg::ols_fit(
                    &linalg::select_rows(&w, &train_rows),
                    &linalg::select_rows(&y, &train_rows),
                )?;
                let resid =
                    linalg::select_rows(&y, &val_rows) - linalg::select_rows(&w, &val_rows) * &c_fold;
                cv += resid.norm_squared();
            }
            let u = match &missed {
                Some(m_mat) => Some(u_draw(&x, &o, m_mat, &first_train)?),
                None => None,
            };
            Ok(Rep { gap: cv - trn, u })
        })
        .collect::<Result<Vec<_>>>()?;

    let gaps: Vec<f64> = reps.iter().map(|r| r.gap).collect();
    let u_vals: Vec<f64> = if missed.is_some() {
        let draws: Vec<UDraw> = reps.into_iter().map(|r| r.u.unwrap()).collect();
        u_values(&draws, &sigma_su_half)
    } else {
        vec![0.0; cfg.reps]
    };
    let centered: Vec<f64> = gaps.iter().zip(&u_vals).map(|(g, u)| g - u).collect();
    let empirical_gap = gaps.iter().sum::<f64>() / cfg.reps as f64;
    let u_monte_carlo = u_vals.iter().sum::<f64>() / cfg.reps as f64;
    Ok(IdentityReport {
        empirical_gap,
        d_formula,
        u_formula,
        u_monte_carlo,
        mc_std_err: sample_sd(&centered) / (cfg.reps as f64).sqrt(),
        replications: cfg.reps,
        k: cfg.k,
        seed: cfg.seed,
    })
}
