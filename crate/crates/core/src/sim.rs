//! Synthetic experiment harness: instance generation with autoregressive
//! predictor correlation and a planted row-sparse low-rank signal, method
//! comparison across information criteria and cross-validation variants,
//! a fold-inconsistency audit of conventional fixed-λ CV, and bootstrap
//! stability analysis of the selected structure.

use std::collections::BTreeMap;
use std::io;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{self, ClassicalIc};
use crate::data::RegressionData;
use crate::error::{Error, Result};
use crate::linalg;
use crate::path::{solution_path, PathConfig, SolutionPath};
use crate::patterns::CandidateModel;
use crate::resampling::{
    fixed_lambda_cv, make_folds, scv_evaluate_with, FoldPlan, SCV_ALPHA1, SCV_ALPHA2,
    SCV_FRACTIONAL_ALPHA1, SCV_FRACTIONAL_ALPHA2,
};

/// Default weight on the PIC penalty.
pub const DEFAULT_PIC_A: f64 = 2.0;

/// One synthetic regression design: X rows i.i.d. N(0, Σ) with
/// Σ_{jk} = ρ^{|j−k|}, B* = b·(A₀A₁)ᵀ on the first `j_true` rows (zeros
/// elsewhere), Y = XB* + σE.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub j_true: usize,
    pub r_true: usize,
    pub rho: f64,
    pub b: f64,
    pub sigma: f64,
    pub reps: usize,
    pub seed: u64,
}

impl SimConfig {
    /// The n > p regime: n=100, p=60, m=15, J*=30, r*=5, weak signal b=0.1.
    pub fn dense_regime() -> Self {
        SimConfig {
            n: 100,
            p: 60,
            m: 15,
            j_true: 30,
            r_true: 5,
            rho: 0.1,
            b: 0.1,
            sigma: 1.0,
            reps: 50,
            seed: 0,
        }
    }

    /// Same dimensions with the stronger signal b=0.5.
    pub fn strong_signal_regime() -> Self {
        SimConfig {
            b: 0.5,
            ..Self::dense_regime()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.m == 0 {
            return Err(Error::InvalidParameter(
                "SimConfig: n, p, m must be positive".into(),
            ));
        }
        if self.j_true == 0 || self.j_true > self.p {
            return Err(Error::InvalidParameter(format!(
                "SimConfig: J_true = {} outside 1..={}",
                self.j_true, self.p
            )));
        }
        if self.r_true == 0 || self.r_true > self.j_true.min(self.m) {
            return Err(Error::InvalidParameter(format!(
                "SimConfig: r_true = {} outside 1..={}",
                self.r_true,
                self.j_true.min(self.m)
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidParameter(format!(
                "SimConfig: rho = {} outside [0, 1)",
                self.rho
            )));
        }
        if !self.b.is_finite() || !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::InvalidParameter(
                "SimConfig: b must be finite and sigma finite nonnegative".into(),
            ));
        }
        if self.reps == 0 {
            return Err(Error::InvalidParameter("SimConfig: reps ≥ 1".into()));
        }
        Ok(())
    }
}

/// Autoregressive covariance Σ_{jk} = ρ^{|j−k|}.
pub fn ar_covariance(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| rho.powi((i as i64 - j as i64).unsigned_abs() as i32))
}

fn standard_normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// A generated instance. The planted coefficient matrix is kept raw because
/// b = 0 produces a pure-noise response whose zero signal has no structural
/// pattern; `truth` gives the pattern view whenever one exists.
#[derive(Debug, Clone)]
pub struct SimInstance {
    pub data: RegressionData,
    pub coefficients: DMatrix<f64>,
}

impl SimInstance {
    /// Structural view of the planted signal; `None` iff it is identically
    /// zero.
    pub fn truth(&self) -> Option<CandidateModel> {
        CandidateModel::from_coefficients(self.coefficients.clone()).ok()
    }

    /// Indices of the noise-free true predictors.
    pub fn support(&self) -> Vec<usize> {
        (0..self.coefficients.nrows())
            .filter(|&i| self.coefficients.row(i).iter().any(|v| *v != 0.0))
            .collect()
    }
}

fn instance_with_seed(cfg: &SimConfig, seed: u64) -> Result<SimInstance> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a0 = standard_normal_matrix(&mut rng, cfg.m, cfg.r_true);
    let a1 = standard_normal_matrix(&mut rng, cfg.r_true, cfg.j_true);
    let mut coefficients = DMatrix::zeros(cfg.p, cfg.m);
    let block = cfg.b * (a0 * a1).transpose();
    coefficients.view_mut((0, 0), (cfg.j_true, cfg.m)).copy_from(&block);
    let sigma_mat = ar_covariance(cfg.p, cfg.rho);
    let chol = nalgebra::Cholesky::new(sigma_mat)
        .ok_or_else(|| Error::InvalidParameter("AR covariance not positive-definite".into()))?;
    let x = standard_normal_matrix(&mut rng, cfg.n, cfg.p) * chol.l().transpose();
    let noise = cfg.sigma * standard_normal_matrix(&mut rng, cfg.n, cfg.m);
    let y = &x * &coefficients + noise;
    Ok(SimInstance {
        data: RegressionData::new(x, y)?,
        coefficients,
    })
}

/// Draw one instance from the configuration's own seed.
pub fn generate_instance(cfg: &SimConfig) -> Result<SimInstance> {
    instance_with_seed(cfg, cfg.seed)
}

/// Per-replication estimation error Tr{(B̂−B*)ᵀ Σ (B̂−B*)}/m.
pub fn mse_metric(
    b_hat: &DMatrix<f64>,
    b_star: &DMatrix<f64>,
    covariance: &DMatrix<f64>,
) -> Result<f64> {
    if b_hat.shape() != b_star.shape()
        || covariance.nrows() != covariance.ncols()
        || covariance.nrows() != b_hat.nrows()
    {
        return Err(Error::ShapeMismatch(format!(
            "mse_metric: B̂ {:?}, B* {:?}, Σ {:?}",
            b_hat.shape(),
            b_star.shape(),
            covariance.shape()
        )));
    }
    let delta = b_hat - b_star;
    Ok((delta.transpose() * covariance * delta).trace() / b_hat.ncols() as f64)
}

/// Missing and false-alarm percentages of a selected support against the
/// true one. A saturated truth (|𝒥*| = p) leaves nothing to falsely select,
/// so FA is 0 there.
pub fn selection_rates(j_hat: &[usize], j_star: &[usize], p: usize) -> Result<(f64, f64)> {
    if j_star.is_empty() {
        return Err(Error::InvalidParameter(
            "selection_rates: empty true support".into(),
        ));
    }
    if j_star.iter().any(|&j| j >= p) || j_hat.iter().any(|&j| j >= p) {
        return Err(Error::InvalidParameter(
            "selection_rates: index outside 0..p".into(),
        ));
    }
    let star: std::collections::HashSet<usize> = j_star.iter().copied().collect();
    let hat: std::collections::HashSet<usize> = j_hat.iter().copied().collect();
    let missing = star.difference(&hat).count();
    let false_alarm = hat.difference(&star).count();
    let m_rate = 100.0 * missing as f64 / star.len() as f64;
    let fa_rate = if p == star.len() {
        0.0
    } else {
        100.0 * false_alarm as f64 / (p - star.len()) as f64
    };
    Ok((m_rate, fa_rate))
}

/// A model-selection method the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    Aic,
    Bic,
    Ebic,
    Pic,
    PicRecommended,
    /// Conventional K-fold CV: the path is rerun in every fold and scored at
    /// fixed tuning points.
    Cv(usize),
    /// Structural K-fold CV, additive calibration.
    ScvPlugin(usize),
    /// Structural K-fold CV, fractional calibration.
    ScvFractional(usize),
}

impl Method {
    /// The comparison set used by the synthetic studies.
    pub fn standard_set() -> Vec<Method> {
        vec![
            Method::Aic,
            Method::Bic,
            Method::Ebic,
            Method::Pic,
            Method::PicRecommended,
            Method::Cv(2),
            Method::Cv(5),
            Method::Cv(10),
            Method::ScvPlugin(5),
            Method::ScvFractional(5),
        ]
    }

    fn folds(&self) -> Option<usize> {
        match self {
            Method::Cv(k) | Method::ScvPlugin(k) | Method::ScvFractional(k) => Some(*k),
            _ => None,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Aic => write!(f, "AIC"),
            Method::Bic => write!(f, "BIC"),
            Method::Ebic => write!(f, "EBIC"),
            Method::Pic => write!(f, "PIC"),
            Method::PicRecommended => write!(f, "PIC-recommended"),
            Method::Cv(k) => write!(f, "{k}-CV"),
            Method::ScvPlugin(k) => write!(f, "{k}-SCV(plugin)"),
            Method::ScvFractional(k) => write!(f, "{k}-SCV(fractional)"),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        let t = s.trim().to_ascii_uppercase();
        match t.as_str() {
            "AIC" => return Ok(Method::Aic),
            "BIC" => return Ok(Method::Bic),
            "EBIC" => return Ok(Method::Ebic),
            "PIC" => return Ok(Method::Pic),
            "PIC-RECOMMENDED" => return Ok(Method::PicRecommended),
            _ => {}
        }
        let parse_k = |digits: &str| -> Result<usize> {
            let k: usize = digits
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("unknown method '{s}'")))?;
            if k < 2 {
                return Err(Error::InvalidParameter(format!(
                    "method '{s}': fold count must be ≥ 2"
                )));
            }
            Ok(k)
        };
        if let Some(digits) = t.strip_suffix("-CV") {
            return Ok(Method::Cv(parse_k(digits)?));
        }
        if let Some(rest) = t.strip_suffix("-SCV(PLUGIN)") {
            return Ok(Method::ScvPlugin(parse_k(rest)?));
        }
        if let Some(rest) = t.strip_suffix("-SCV(FRACTIONAL)") {
            return Ok(Method::ScvFractional(parse_k(rest)?));
        }
        Err(Error::InvalidParameter(format!("unknown method '{s}'")))
    }
}

/// One method's outcome on one replication; the per-replication log row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub method: String,
    #[serde(rename = "J_hat")]
    pub j_hat: usize,
    #[serde(rename = "r_hat")]
    pub r_hat: usize,
    pub mse: f64,
    pub m_rate: f64,
    pub fa_rate: f64,
    /// Wall-clock cost of the method given the shared full-data path;
    /// excluded from reproducibility comparisons.
    pub runtime_ms: f64,
}

/// Aggregates of one method across replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub replications_used: usize,
    pub median_mse: f64,
    /// 10³ × median MSE, the display scale used alongside the raw value.
    pub median_mse_scaled: f64,
    /// Standard error of the mean MSE.
    pub mse_std_err: f64,
    pub median_j: f64,
    pub median_r: f64,
    pub mean_m_rate: f64,
    pub mean_fa_rate: f64,
}

/// Full experiment outcome. The per-replication records are the source of
/// truth; the summaries are recomputable from them via
/// [`aggregate_records`].
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config: SimConfig,
    pub path: PathConfig,
    pub methods: Vec<String>,
    pub pic_a: f64,
    pub records: Vec<RepRecord>,
    pub summaries: Vec<MethodSummary>,
    /// Method runs dropped because a solver or selection step failed.
    pub failed_method_runs: usize,
    pub version: String,
}

fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn std_err_of_mean(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mu = mean(values);
    let var =
        values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (values.len() - 1) as f64;
    (var.max(0.0) / values.len() as f64).sqrt()
}

/// Recompute per-method summaries from a replication log, methods sorted by
/// name.
pub fn aggregate_records(records: &[RepRecord]) -> Vec<MethodSummary> {
    let mut groups: BTreeMap<&str, Vec<&RepRecord>> = BTreeMap::new();
    for rec in records {
        groups.entry(&rec.method).or_default().push(rec);
    }
    groups
        .into_iter()
        .map(|(method, group)| {
            let mses: Vec<f64> = group.iter().map(|r| r.mse).collect();
            let js: Vec<f64> = group.iter().map(|r| r.j_hat as f64).collect();
            let rs: Vec<f64> = group.iter().map(|r| r.r_hat as f64).collect();
            let m_rates: Vec<f64> = group.iter().map(|r| r.m_rate).collect();
            let fa_rates: Vec<f64> = group.iter().map(|r| r.fa_rate).collect();
            let med = median(&mses);
            MethodSummary {
                method: method.to_string(),
                replications_used: group.len(),
                median_mse: med,
                median_mse_scaled: 1e3 * med,
                mse_std_err: std_err_of_mean(&mses),
                median_j: median(&js),
                median_r: median(&rs),
                mean_m_rate: mean(&m_rates),
                mean_fa_rate: mean(&fa_rates),
            }
        })
        .collect()
}

/// Write the replication log as CSV with one header row.
pub fn write_replication_log<W: io::Write>(records: &[RepRecord], writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for rec in records {
        csv.serialize(rec).map_err(|e| Error::Csv(e.to_string()))?;
    }
    csv.flush().map_err(|e| Error::Csv(e.to_string()))
}

/// Read a replication log back; the inverse of [`write_replication_log`].
pub fn read_replication_log<R: io::Read>(reader: R) -> Result<Vec<RepRecord>> {
    let mut csv = csv::Reader::from_reader(reader);
    csv.deserialize()
        .map(|row| row.map_err(|e| Error::Csv(e.to_string())))
        .collect()
}

/// Residual-based noise scale estimate: σ̂² = ‖Y − P_X Y‖²/(m(n−q)) with
/// q = rank(X); falls back to the entry variance of Y around its column
/// means when the design is saturated (q ≥ n).
pub fn noise_scale_estimate(data: &RegressionData) -> f64 {
    let (n, m) = (data.n(), data.m());
    let q = linalg::numerical_rank(data.x());
    if q < n {
        let svd = data.x().clone().svd(true, false);
        let u = svd.u.as_ref().expect("left vectors requested");
        let kept: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| {
                svd.singular_values[i]
                    > crate::linalg::RANK_REL_TOL * svd.singular_values.max()
            })
            .collect();
        let u_q = u.select_columns(&kept);
        let rss = (data.y() - &u_q * (u_q.transpose() * data.y())).norm_squared();
        (rss / (m * (n - q)) as f64).sqrt().max(1e-12)
    } else {
        let mut total = 0.0;
        for j in 0..m {
            let col = data.y().column(j);
            let mu = col.sum() / n as f64;
            total += col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>();
        }
        (total / (n * m) as f64).sqrt().max(1e-12)
    }
}

/// Conventional K-fold CV over the path's cells: every fold reruns the whole
/// path and is scored per cell; returns the index of the winning cell in the
/// full-data path. Cells invalid in any fold or failed on the full data are
/// skipped.
fn k_fold_path_cv(
    data: &RegressionData,
    path: &SolutionPath,
    path_cfg: &PathConfig,
    plan: &FoldPlan,
) -> Result<usize> {
    let grid: Vec<f64> = (0..path.cells().len()).map(|i| i as f64).collect();
    let learner = |x_tr: &DMatrix<f64>, y_tr: &DMatrix<f64>, grid: &[f64]| {
        let fallback = || vec![None; grid.len()];
        let Ok(train) = RegressionData::new(x_tr.clone(), y_tr.clone()) else {
            return fallback();
        };
        match solution_path(&train, path_cfg) {
            Ok(fold_path) => {
                let coefs = fold_path.cell_coefficients();
                debug_assert_eq!(coefs.len(), grid.len());
                coefs
            }
            Err(_) => fallback(),
        }
    };
    let rows = fixed_lambda_cv(data, learner, &grid, plan)?;
    rows.iter()
        .enumerate()
        .filter(|(i, row)| row.is_valid() && path.cells()[*i].outcome.is_ok())
        .min_by(|a, b| a.1.cv_err.total_cmp(&b.1.cv_err).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .ok_or(Error::NoCandidates)
}

fn argmin_finite(values: &[f64]) -> Result<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::AllExcluded("no admissible candidate".into()))
}

/// Knobs shared by every selection method.
#[derive(Debug, Clone, Copy)]
pub struct SelectionSettings {
    /// Noise scale PIC uses; at zero noise PIC degenerates to a pure-rss
    /// ranking, so the scale is floored at a tiny positive value.
    pub pic_sigma: f64,
    /// Weight on the PIC penalty.
    pub pic_a: f64,
    /// (α₁, α₂) of the additive SCV calibration.
    pub scv_alpha: (f64, f64),
    /// (α₁, α₂) of the fractional SCV calibration.
    pub scv_fractional_alpha: (f64, f64),
    /// Seed for fold assignment in the CV and SCV methods.
    pub fold_seed: u64,
}

impl SelectionSettings {
    pub fn new(pic_sigma: f64, pic_a: f64, fold_seed: u64) -> Self {
        SelectionSettings {
            pic_sigma,
            pic_a,
            scv_alpha: (SCV_ALPHA1, SCV_ALPHA2),
            scv_fractional_alpha: (SCV_FRACTIONAL_ALPHA1, SCV_FRACTIONAL_ALPHA2),
            fold_seed,
        }
    }
}

/// Run one method against a shared full-data path. `candidates` must be the
/// path's deduplicated candidate list; CV-based methods also rerun the path
/// on fold training sets, which is why `path_cfg` travels along.
pub fn select_model(
    data: &RegressionData,
    path: &SolutionPath,
    candidates: &[CandidateModel],
    method: Method,
    path_cfg: &PathConfig,
    settings: &SelectionSettings,
) -> Result<CandidateModel> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let (sigma_pic, pic_a, fold_seed) = (settings.pic_sigma, settings.pic_a, settings.fold_seed);
    let (n, p, m) = (data.n(), data.p(), data.m());
    match method {
        Method::Aic | Method::Bic | Method::Ebic => {
            let kind = match method {
                Method::Aic => ClassicalIc::Aic,
                Method::Bic => ClassicalIc::Bic,
                _ => ClassicalIc::Ebic,
            };
            let values: Vec<f64> = candidates
                .iter()
                .map(|c| {
                    let rss = c.rss(data.x(), data.y()).max(f64::MIN_POSITIVE);
                    let df = (c.cardinality() + m - c.rank()) as f64 * c.rank() as f64;
                    criteria::classical_ic(rss, df, m, n, p, c.cardinality(), kind)
                })
                .collect();
            Ok(candidates[argmin_finite(&values)?].clone())
        }
        Method::Pic => {
            let (idx, _) = criteria::pic_select(
                candidates,
                data.x(),
                data.y(),
                sigma_pic.max(1e-12),
                pic_a,
            )?;
            Ok(candidates[idx].clone())
        }
        Method::PicRecommended => {
            let q = linalg::numerical_rank(data.x());
            let values = candidates
                .iter()
                .map(|c| {
                    let rss = c.rss(data.x(), data.y());
                    let pen = criteria::complexity_penalty(c.cardinality(), c.rank(), p, q, m)?;
                    Ok(criteria::pic_recommended(rss, pen.df, pen.inflation, m, n))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(candidates[argmin_finite(&values)?].clone())
        }
        Method::Cv(k) => {
            let plan = make_folds(n, k, fold_seed)?;
            let cell = k_fold_path_cv(data, path, path_cfg, &plan)?;
            match &path.cells()[cell].outcome {
                Ok(fit) => Ok(fit.model.clone()),
                Err(_) => Err(Error::NoCandidates),
            }
        }
        Method::ScvPlugin(k) | Method::ScvFractional(k) => {
            let plan = make_folds(n, k, fold_seed)?;
            let patterns: Vec<_> = candidates.iter().map(|c| c.pattern().clone()).collect();
            let report =
                scv_evaluate_with(data, &patterns, &plan, settings.scv_alpha.0, settings.scv_alpha.1)?;
            let idx = match method {
                Method::ScvPlugin(_) => report.best()?,
                _ => argmin_finite(&report.fractional_scores(
                    m,
                    n,
                    settings.scv_fractional_alpha.0,
                    settings.scv_fractional_alpha.1,
                ))?,
            };
            // Refit on the full data within the winning pattern.
            crate::patterns::restricted_estimate(data.x(), data.y(), &patterns[idx])
        }
    }
}

/// Compare selection methods over replicated synthetic draws. Replication i
/// is generated from seed `cfg.seed + i`; failed method runs are logged and
/// excluded from the aggregates with a count.
pub fn run_experiment(
    cfg: &SimConfig,
    methods: &[Method],
    path_cfg: &PathConfig,
    pic_a: f64,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    if methods.is_empty() {
        return Err(Error::InvalidParameter("run_experiment: no methods".into()));
    }
    if cfg.b == 0.0 {
        return Err(Error::InvalidParameter(
            "run_experiment: b = 0 plants no support to recover".into(),
        ));
    }
    if let Some(k) = methods.iter().filter_map(Method::folds).find(|&k| k > cfg.n) {
        return Err(Error::InvalidParameter(format!(
            "run_experiment: {k} folds exceed n = {}",
            cfg.n
        )));
    }
    path_cfg.validate_grids(cfg.p, cfg.m)?;
    let sigma_mat = ar_covariance(cfg.p, cfg.rho);

    let per_rep: Vec<(Vec<RepRecord>, usize)> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let seed = cfg.seed.wrapping_add(rep as u64);
            match run_one_rep(cfg, methods, path_cfg, pic_a, &sigma_mat, rep, seed) {
                Ok(outcome) => outcome,
                Err(e) => {
                    log::warn!("replication {rep} failed entirely: {e}");
                    (Vec::new(), methods.len())
                }
            }
        })
        .collect();

    let mut records = Vec::with_capacity(cfg.reps * methods.len());
    let mut failed_method_runs = 0;
    for (recs, failures) in per_rep {
        records.extend(recs);
        failed_method_runs += failures;
    }
    let summaries = aggregate_records(&records);
    Ok(ExperimentReport {
        config: cfg.clone(),
        path: path_cfg.clone(),
        methods: methods.iter().map(|m| m.to_string()).collect(),
        pic_a,
        records,
        summaries,
        failed_method_runs,
        version: crate::library_version().to_string(),
    })
}

fn run_one_rep(
    cfg: &SimConfig,
    methods: &[Method],
    path_cfg: &PathConfig,
    pic_a: f64,
    sigma_mat: &DMatrix<f64>,
    rep: usize,
    seed: u64,
) -> Result<(Vec<RepRecord>, usize)> {
    let instance = instance_with_seed(cfg, seed)?;
    let truth_support = instance.support();
    let path = solution_path(&instance.data, path_cfg)?;
    let candidates = path.candidates();
    let mut records = Vec::with_capacity(methods.len());
    let mut failures = 0;
    for (mi, &method) in methods.iter().enumerate() {
        let start = Instant::now();
        let fold_seed = seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(mi as u64);
        let picked = select_model(
            &instance.data,
            &path,
            &candidates,
            method,
            path_cfg,
            &SelectionSettings::new(cfg.sigma, pic_a, fold_seed),
        );
        match picked {
            Ok(model) => {
                let mse = mse_metric(model.coefficients(), &instance.coefficients, sigma_mat)?;
                let (m_rate, fa_rate) =
                    selection_rates(model.pattern().support(), &truth_support, cfg.p)?;
                records.push(RepRecord {
                    rep,
                    method: method.to_string(),
                    j_hat: model.cardinality(),
                    r_hat: model.rank(),
                    mse,
                    m_rate,
                    fa_rate,
                    runtime_ms: start.elapsed().as_secs_f64() * 1e3,
                });
            }
            Err(e) => {
                log::warn!("replication {rep}, method {method}: {e}");
                failures += 1;
            }
        }
    }
    Ok((records, failures))
}

/// One tuning point of the fold-inconsistency audit: the spread of support
/// sizes the same λ produced across the K fold trainings.
#[derive(Debug, Clone, Serialize)]
pub struct AuditRow {
    pub lambda: f64,
    pub min_card: usize,
    pub med_card: f64,
    pub max_card: usize,
}

/// Fixed-λ CV inconsistency audit on a single-response dataset: per λ, run
/// the coordinate-descent path on each fold training set and report the
/// range of selected support sizes. A nonzero max−min range at some λ is the
/// structural instability that motivates holding patterns fixed across
/// folds.
pub fn inconsistency_audit(
    data: &RegressionData,
    lambda_grid: &[f64],
    k: usize,
    seed: u64,
) -> Result<Vec<AuditRow>> {
    if data.m() != 1 {
        return Err(Error::InvalidParameter(format!(
            "inconsistency_audit: needs a single-response dataset, got m = {}",
            data.m()
        )));
    }
    if lambda_grid.is_empty() {
        return Err(Error::InvalidParameter(
            "inconsistency_audit: empty lambda grid".into(),
        ));
    }
    let plan = make_folds(data.n(), k, seed)?;
    let solver = PathConfig {
        max_iter: 20_000,
        tol: 1e-10,
        ..PathConfig::default()
    };
    let mut cards: Vec<Vec<usize>> = vec![Vec::with_capacity(k); lambda_grid.len()];
    for fold in 0..k {
        let train = plan.complement_indices(fold);
        let x_train = linalg::select_rows(data.x(), &train);
        let y_train = nalgebra::DVector::from_iterator(
            train.len(),
            linalg::select_rows(data.y(), &train).column(0).iter().copied(),
        );
        let fits = crate::path::lasso_like_path(&x_train, &y_train, lambda_grid, &solver)?;
        for (slot, fit) in cards.iter_mut().zip(&fits) {
            slot.push(fit.coefficients.iter().filter(|v| **v != 0.0).count());
        }
    }
    Ok(lambda_grid
        .iter()
        .zip(cards)
        .map(|(&lambda, mut sizes)| {
            sizes.sort_unstable();
            let med = if sizes.len() % 2 == 1 {
                sizes[sizes.len() / 2] as f64
            } else {
                0.5 * (sizes[sizes.len() / 2 - 1] + sizes[sizes.len() / 2]) as f64
            };
            AuditRow {
                lambda,
                min_card: sizes[0],
                med_card: med,
                max_card: sizes[sizes.len() - 1],
            }
        })
        .collect())
}

/// Write audit rows as plot-ready CSV (lambda, min_card, med_card, max_card).
pub fn write_audit_csv<W: io::Write>(rows: &[AuditRow], writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for row in rows {
        csv.serialize(row).map_err(|e| Error::Csv(e.to_string()))?;
    }
    csv.flush().map_err(|e| Error::Csv(e.to_string()))
}

/// Bootstrap stability of one method's selection on a fixed dataset.
#[derive(Debug, Clone, Serialize)]
pub struct BootstrapReport {
    pub method: String,
    /// Ĵ value → number of resamples selecting it.
    pub j_counts: BTreeMap<usize, usize>,
    /// r̂ value → number of resamples selecting it.
    pub r_counts: BTreeMap<usize, usize>,
    /// Per-predictor selection frequency over the successful resamples.
    pub selection_frequency: Vec<f64>,
    pub resamples: usize,
    pub skipped: usize,
    pub seed: u64,
}

/// Resample rows with replacement `b_reps` times; per resample, rebuild the
/// path and run the method. Degenerate resamples are skipped and counted.
pub fn bootstrap_stability(
    data: &RegressionData,
    method: Method,
    path_cfg: &PathConfig,
    b_reps: usize,
    seed: u64,
    pic_a: f64,
) -> Result<BootstrapReport> {
    if b_reps == 0 {
        return Err(Error::InvalidParameter("bootstrap_stability: B ≥ 1".into()));
    }
    path_cfg.validate_grids(data.p(), data.m())?;
    let n = data.n();
    let outcomes: Vec<Option<(usize, usize, Vec<usize>)>> = (0..b_reps)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(b as u64));
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let Ok(resampled) = data.subset(&rows) else {
                return None;
            };
            let Ok(path) = solution_path(&resampled, path_cfg) else {
                return None;
            };
            let candidates = path.candidates();
            let sigma_hat = noise_scale_estimate(&resampled);
            select_model(
                &resampled,
                &path,
                &candidates,
                method,
                path_cfg,
                &SelectionSettings::new(sigma_hat, pic_a, seed.wrapping_add(0xB00 + b as u64)),
            )
            .ok()
            .map(|model| {
                (
                    model.cardinality(),
                    model.rank(),
                    model.pattern().support().to_vec(),
                )
            })
        })
        .collect();

    let mut j_counts = BTreeMap::new();
    let mut r_counts = BTreeMap::new();
    let mut freq = vec![0.0; data.p()];
    let mut resamples = 0;
    for outcome in outcomes.into_iter().flatten() {
        let (j, r, support) = outcome;
        *j_counts.entry(j).or_insert(0) += 1;
        *r_counts.entry(r).or_insert(0) += 1;
        for idx in support {
            freq[idx] += 1.0;
        }
        resamples += 1;
    }
    if resamples > 0 {
        for f in &mut freq {
            *f /= resamples as f64;
        }
    }
    Ok(BootstrapReport {
        method: method.to_string(),
        j_counts,
        r_counts,
        selection_frequency: freq,
        resamples,
        skipped: b_reps - resamples,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::str::FromStr;

    fn tiny_config() -> SimConfig {
        SimConfig {
            n: 25,
            p: 6,
            m: 2,
            j_true: 3,
            r_true: 1,
            rho: 0.2,
            b: 1.0,
            sigma: 0.3,
            reps: 3,
            seed: 7,
        }
    }

    fn tiny_path() -> PathConfig {
        PathConfig {
            j_grid: (1..=5).collect(),
            r_grid: vec![1, 2],
            max_iter: 300,
            tol: 1e-9,
            ..PathConfig::default()
        }
    }

    #[test]
    fn covariance_follows_the_ar_formula() {
        let cov = ar_covariance(4, 0.5);
        assert_relative_eq!(cov[(0, 2)], 0.25, epsilon = 1e-15);
        assert_relative_eq!(cov[(3, 1)], 0.25, epsilon = 1e-15);
        assert_relative_eq!(cov[(2, 2)], 1.0, epsilon = 1e-15);
        assert!(nalgebra::Cholesky::new(cov).is_some());
    }

    #[test]
    fn generated_instance_has_the_planted_structure() {
        let cfg = SimConfig {
            n: 30,
            p: 10,
            m: 4,
            j_true: 4,
            r_true: 2,
            rho: 0.3,
            b: 0.7,
            sigma: 0.5,
            reps: 1,
            seed: 3,
        };
        let instance = generate_instance(&cfg).unwrap();
        assert_eq!(instance.data.n(), 30);
        assert_eq!(instance.data.p(), 10);
        assert_eq!(instance.data.m(), 4);
        assert_eq!(linalg::numerical_rank(&instance.coefficients), 2);
        assert_eq!(instance.support(), vec![0, 1, 2, 3]);
        let truth = instance.truth().unwrap();
        assert_eq!(truth.cardinality(), 4);
        assert_eq!(truth.rank(), 2);
        // Reproducibility: the same configuration regenerates bit-identically.
        let again = generate_instance(&cfg).unwrap();
        assert_eq!(instance.data.x(), again.data.x());
        assert_eq!(instance.data.y(), again.data.y());
    }

    #[test]
    fn zero_signal_yields_pure_noise() {
        let mut cfg = tiny_config();
        cfg.b = 0.0;
        let instance = generate_instance(&cfg).unwrap();
        assert!(instance.coefficients.iter().all(|v| *v == 0.0));
        assert!(instance.truth().is_none());
        assert!(instance.support().is_empty());
    }

    #[test]
    fn mse_metric_matches_hand_values() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert_eq!(mse_metric(&b, &b, &cov).unwrap(), 0.0);

        // Σ = I, m = 1: squared Frobenius norm of the difference.
        let b1 = DMatrix::from_row_slice(2, 1, &[1.0, -2.0]);
        let z = DMatrix::zeros(2, 1);
        let eye = DMatrix::identity(2, 2);
        assert_relative_eq!(mse_metric(&b1, &z, &eye).unwrap(), 5.0, epsilon = 1e-14);

        // Unit entry in row 0: Tr{ΔᵀΣΔ} = Σ₀₀ = 1, divided by m = 2.
        let mut delta = DMatrix::zeros(2, 2);
        delta[(0, 0)] = 1.0;
        assert_relative_eq!(
            mse_metric(&delta, &DMatrix::zeros(2, 2), &cov).unwrap(),
            0.5,
            epsilon = 1e-14
        );

        assert!(mse_metric(&b1, &z, &cov).is_ok());
        let wrong = DMatrix::zeros(3, 1);
        assert!(mse_metric(&b1, &wrong, &eye).is_err());
    }

    #[test]
    fn selection_rates_match_set_arithmetic() {
        assert_eq!(
            selection_rates(&[0, 1, 2], &[0, 1, 2], 10).unwrap(),
            (0.0, 0.0)
        );
        assert_eq!(selection_rates(&[], &[0, 1], 10).unwrap(), (100.0, 0.0));
        let (m, fa) = selection_rates(&[0, 1, 2, 5], &[0, 1, 2, 3, 4], 10).unwrap();
        assert_relative_eq!(m, 40.0, epsilon = 1e-12);
        assert_relative_eq!(fa, 20.0, epsilon = 1e-12);
        // Missing plus recovered always accounts for the whole true support.
        let recovered = 100.0 - m;
        assert_relative_eq!(m + recovered, 100.0, epsilon = 1e-12);
        assert!(selection_rates(&[0], &[], 10).is_err());
        assert!(selection_rates(&[10], &[0], 10).is_err());
        // Saturated truth leaves no room for false alarms.
        assert_eq!(selection_rates(&[0, 1], &[0, 1], 2).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn method_names_round_trip() {
        for method in Method::standard_set() {
            let shown = method.to_string();
            assert_eq!(Method::from_str(&shown).unwrap(), method);
        }
        assert_eq!(Method::from_str(" pic ").unwrap(), Method::Pic);
        assert_eq!(Method::from_str("7-CV").unwrap(), Method::Cv(7));
        assert!(Method::from_str("1-CV").is_err());
        assert!(Method::from_str("ABC").is_err());
        assert!(Method::from_str("-CV").is_err());
    }

    #[test]
    fn experiment_records_are_complete_and_reaggregable() {
        let cfg = tiny_config();
        let methods = [
            Method::Pic,
            Method::PicRecommended,
            Method::Cv(5),
            Method::ScvPlugin(5),
        ];
        let report = run_experiment(&cfg, &methods, &tiny_path(), DEFAULT_PIC_A).unwrap();
        assert_eq!(report.failed_method_runs, 0);
        assert_eq!(report.records.len(), cfg.reps * methods.len());
        for rec in &report.records {
            assert!(rec.mse.is_finite() && rec.mse >= 0.0);
            assert!((0.0..=100.0).contains(&rec.m_rate));
            assert!((0.0..=100.0).contains(&rec.fa_rate));
            assert!(rec.j_hat >= 1 && rec.j_hat <= cfg.p);
            assert!(rec.r_hat >= 1 && rec.r_hat <= cfg.m);
        }
        // The log is the source of truth for the summaries.
        assert_eq!(aggregate_records(&report.records), report.summaries);

        // Reruns agree on everything except wall-clock timings.
        let again = run_experiment(&cfg, &methods, &tiny_path(), DEFAULT_PIC_A).unwrap();
        assert_eq!(report.summaries, again.summaries);
        for (a, b) in report.records.iter().zip(&again.records) {
            assert_eq!(a.rep, b.rep);
            assert_eq!(a.method, b.method);
            assert_eq!(a.j_hat, b.j_hat);
            assert_eq!(a.r_hat, b.r_hat);
            assert_eq!(a.mse, b.mse);
            assert_eq!(a.m_rate, b.m_rate);
            assert_eq!(a.fa_rate, b.fa_rate);
        }
    }

    #[test]
    fn noiseless_strong_signal_is_recovered_by_every_method() {
        let cfg = SimConfig {
            n: 30,
            p: 6,
            m: 3,
            j_true: 2,
            r_true: 1,
            rho: 0.0,
            b: 2.0,
            sigma: 0.0,
            reps: 2,
            seed: 11,
        };
        let methods = [
            Method::Aic,
            Method::Bic,
            Method::Ebic,
            Method::Pic,
            Method::PicRecommended,
            Method::Cv(5),
            Method::ScvPlugin(5),
            Method::ScvFractional(5),
        ];
        let report = run_experiment(&cfg, &methods, &tiny_path(), DEFAULT_PIC_A).unwrap();
        assert_eq!(report.failed_method_runs, 0);
        for rec in &report.records {
            // Exact fit: the signal is recovered and nothing true is missed.
            assert!(rec.mse < 1e-10, "{}: mse = {}", rec.method, rec.mse);
            assert_eq!(rec.m_rate, 0.0, "{} missed a true variable", rec.method);
        }
    }

    #[test]
    fn small_noise_gives_exact_selection_for_penalized_methods() {
        let cfg = SimConfig {
            n: 40,
            p: 6,
            m: 3,
            j_true: 2,
            r_true: 1,
            rho: 0.0,
            b: 2.0,
            sigma: 0.05,
            reps: 3,
            seed: 19,
        };
        let methods = [Method::Pic, Method::PicRecommended, Method::ScvPlugin(5)];
        let report = run_experiment(&cfg, &methods, &tiny_path(), DEFAULT_PIC_A).unwrap();
        assert_eq!(report.failed_method_runs, 0);
        for rec in &report.records {
            // The signal dwarfs the noise, so a miss is never acceptable;
            // an occasional single spurious inclusion is (selection is a
            // scale-free contest between near-equivalent supersets).
            assert_eq!(rec.m_rate, 0.0, "{} missed a true variable", rec.method);
            assert!(rec.j_hat <= cfg.j_true + 1, "{}: Ĵ = {}", rec.method, rec.j_hat);
        }
        for summary in &report.summaries {
            assert_eq!(summary.median_j, cfg.j_true as f64, "{}", summary.method);
            assert_eq!(summary.median_r, cfg.r_true as f64, "{}", summary.method);
        }
    }

    #[test]
    fn replication_log_round_trips_through_csv() {
        let cfg = tiny_config();
        let report =
            run_experiment(&cfg, &[Method::Pic], &tiny_path(), DEFAULT_PIC_A).unwrap();
        let mut buf = Vec::new();
        write_replication_log(&report.records, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("rep,method,J_hat,r_hat,mse,m_rate,fa_rate,runtime_ms"));
        let back = read_replication_log(&buf[..]).unwrap();
        assert_eq!(back, report.records);
        assert_eq!(aggregate_records(&back), report.summaries);
    }

    #[test]
    fn audit_brackets_the_null_and_saturated_extremes() {
        let cfg = SimConfig {
            m: 1,
            ..tiny_config()
        };
        let instance = generate_instance(&cfg).unwrap();
        let xty = instance.data.x().transpose() * instance.data.y().column(0);
        let lambda_max = xty.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let grid = [2.0 * lambda_max, lambda_max * 0.05, 0.0];
        let rows = inconsistency_audit(&instance.data, &grid, 5, 13).unwrap();
        assert_eq!(rows.len(), 3);
        // Above every fold's null threshold nothing enters.
        assert_eq!(
            (rows[0].min_card, rows[0].med_card, rows[0].max_card),
            (0, 0.0, 0)
        );
        // At λ = 0 with p < n the fit is unrestricted least squares.
        assert_eq!(
            (rows[2].min_card, rows[2].med_card, rows[2].max_card),
            (cfg.p, cfg.p as f64, cfg.p)
        );
        assert!(rows.iter().all(|r| r.min_card <= r.max_card));

        let multi = generate_instance(&tiny_config()).unwrap();
        assert!(inconsistency_audit(&multi.data, &grid, 5, 13).is_err());
    }

    #[test]
    fn bootstrap_counts_are_consistent() {
        let cfg = tiny_config();
        let instance = generate_instance(&cfg).unwrap();
        let report = bootstrap_stability(
            &instance.data,
            Method::ScvPlugin(5),
            &tiny_path(),
            6,
            21,
            DEFAULT_PIC_A,
        )
        .unwrap();
        assert_eq!(report.resamples + report.skipped, 6);
        assert!(report.resamples >= 1);
        assert_eq!(report.j_counts.values().sum::<usize>(), report.resamples);
        assert_eq!(report.r_counts.values().sum::<usize>(), report.resamples);
        assert_eq!(report.selection_frequency.len(), cfg.p);
        assert!(report
            .selection_frequency
            .iter()
            .all(|f| (0.0..=1.0).contains(f)));

        // A single resample at a fixed seed is deterministic.
        let one = bootstrap_stability(
            &instance.data,
            Method::ScvPlugin(5),
            &tiny_path(),
            1,
            21,
            DEFAULT_PIC_A,
        )
        .unwrap();
        let two = bootstrap_stability(
            &instance.data,
            Method::ScvPlugin(5),
            &tiny_path(),
            1,
            21,
            DEFAULT_PIC_A,
        )
        .unwrap();
        assert_eq!(one.j_counts, two.j_counts);
        assert_eq!(one.selection_frequency, two.selection_frequency);
    }
}
