//! Predictive information criteria for jointly row-sparse, rank-deficient
//! models, scale-free variants, and classical baselines.
//!
//! The complexity of a candidate with support size J and rank r against a
//! design of rank q splits into two parts:
//!   degrees of freedom  DF = (q∧J + m − r)·r
//!   inflation factor    IF = J·log(e·p/J)
//! The penalized criterion is ½‖Y − XB‖²_F + A·σ²·(DF + IF); the scale-free
//! forms eliminate σ² through the normalized penalty δ = A·(DF+IF)/(mn),
//! which must stay below 1 for a candidate to remain admissible.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::patterns::CandidateModel;

/// The two-part complexity penalty of a (J, r) candidate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ComplexityPenalty {
    /// (q∧J + m − r)·r
    pub df: f64,
    /// J·log(e·p/J)
    pub inflation: f64,
}

impl ComplexityPenalty {
    pub fn total(&self) -> f64 {
        self.df + self.inflation
    }
}

/// Computes the penalty for a candidate with support size `j` and rank `r`
/// on a p-predictor problem whose design has rank `q` and whose response has
/// `m` columns.
pub fn complexity_penalty(
    j: usize,
    r: usize,
    p: usize,
    q: usize,
    m: usize,
) -> Result<ComplexityPenalty> {
    if j == 0 || j > p {
        return Err(Error::InvalidParameter(format!(
            "complexity_penalty: support size {j} outside 1..={p}"
        )));
    }
    if r == 0 || r > j.min(m) {
        return Err(Error::InvalidParameter(format!(
            "complexity_penalty: rank {r} outside 1..={}",
            j.min(m)
        )));
    }
    if q == 0 {
        return Err(Error::InvalidParameter(
            "complexity_penalty: design rank q must be positive".into(),
        ));
    }
    let df = (q.min(j) + m - r) as f64 * r as f64;
    let inflation = j as f64 * (1.0 + (p as f64 / j as f64).ln());
    Ok(ComplexityPenalty { df, inflation })
}

/// Scale-free transcriptions of the penalized criterion. All four share the
/// same normalized penalty δ and agree to first order in δ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScaleFreeForm {
    /// rss / (1 − δ)
    Fractional,
    /// rss / (1 − δ)², the generalized-CV shape
    Gcv,
    /// log(rss) + δ
    Log,
    /// rss·(1 + δ)
    Plugin,
}

/// Evaluates one scale-free form. Candidates with δ = a·(DF+IF)/(mn) ≥ 1 are
/// inadmissible and map to +∞. A zero rss under the log form is a degenerate
/// (interpolating) fit and maps to −∞.
pub fn scale_free_pic(
    rss: f64,
    penalty: &ComplexityPenalty,
    m: usize,
    n: usize,
    form: ScaleFreeForm,
    a: f64,
) -> f64 {
    debug_assert!(rss >= 0.0 && a > 0.0 && m > 0 && n > 0);
    let delta = a * penalty.total() / (m as f64 * n as f64);
    if delta >= 1.0 {
        return f64::INFINITY;
    }
    match form {
        ScaleFreeForm::Fractional => rss / (1.0 - delta),
        ScaleFreeForm::Gcv => rss / ((1.0 - delta) * (1.0 - delta)),
        ScaleFreeForm::Log => {
            if rss == 0.0 {
                f64::NEG_INFINITY
            } else {
                rss.ln() + delta
            }
        }
        ScaleFreeForm::Plugin => rss * (1.0 + delta),
    }
}

/// The recommended selector: a fractional form with the degrees of freedom
/// weighted at 2 and the inflation factor at 1.8,
///   rss / (1 − (2·DF + 1.8·IF)/(mn)),
/// mapping to +∞ once the weighted complexity reaches mn.
pub fn pic_recommended(rss: f64, df: f64, inflation: f64, m: usize, n: usize) -> f64 {
    debug_assert!(rss >= 0.0);
    let mn = m as f64 * n as f64;
    let weighted = 2.0 * df + 1.8 * inflation;
    if weighted >= mn {
        return f64::INFINITY;
    }
    rss / (1.0 - weighted / mn)
}

/// Classical baselines on the log-rss scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ClassicalIc {
    Aic,
    Bic,
    /// BIC plus the extended combinatorial term 2·log C(p, J).
    Ebic,
}

/// log C(p, j) through log-gamma, safe for large p.
pub fn ln_binomial(p: usize, j: usize) -> f64 {
    use statrs::function::gamma::ln_gamma;
    if j > p {
        return f64::NEG_INFINITY;
    }
    ln_gamma(p as f64 + 1.0) - ln_gamma(j as f64 + 1.0) - ln_gamma((p - j) as f64 + 1.0)
}

/// Evaluates log(rss) + penalty/(mn) with the AIC, BIC, or EBIC penalty.
/// `df_effective` is the parameter count (J + m − r)·r of the candidate;
/// `p` and `j` feed the EBIC combinatorial term and are ignored otherwise.
pub fn classical_ic(
    rss: f64,
    df_effective: f64,
    m: usize,
    n: usize,
    p: usize,
    j: usize,
    kind: ClassicalIc,
) -> f64 {
    debug_assert!(rss > 0.0 && df_effective >= 0.0);
    let mn = m as f64 * n as f64;
    let penalty = match kind {
        ClassicalIc::Aic => 2.0 * df_effective,
        ClassicalIc::Bic => (n as f64).ln() * df_effective,
        ClassicalIc::Ebic => (n as f64).ln() * df_effective + 2.0 * ln_binomial(p, j),
    };
    rss.ln() + penalty / mn
}

/// One candidate's score under a criterion.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionScore {
    pub candidate: usize,
    pub rss: f64,
    pub penalty: ComplexityPenalty,
    pub value: f64,
    pub excluded: bool,
}

/// Breaks value ties by smaller penalty, then smaller index. Entries must be
/// finite unless excluded.
pub(crate) fn pick_min(scores: &[CriterionScore]) -> Result<usize> {
    scores
        .iter()
        .filter(|s| !s.excluded && s.value.is_finite())
        .min_by(|a, b| {
            a.value
                .total_cmp(&b.value)
                .then(a.penalty.total().total_cmp(&b.penalty.total()))
                .then(a.candidate.cmp(&b.candidate))
        })
        .map(|s| s.candidate)
        .ok_or_else(|| Error::AllExcluded("no admissible candidate".into()))
}

/// Selects argmin over candidates of ½·rss + a·σ²·(DF + IF), with ties broken
/// by smaller penalty and then smaller candidate index. Returns the winning
/// index and the full score table.
pub fn pic_select(
    candidates: &[CandidateModel],
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    sigma: f64,
    a: f64,
) -> Result<(usize, Vec<CriterionScore>)> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    if sigma <= 0.0 || a <= 0.0 {
        return Err(Error::InvalidParameter(
            "pic_select: sigma and a must be positive".into(),
        ));
    }
    let q = linalg::numerical_rank(x);
    let p = x.ncols();
    let m = y.ncols();
    let mut scores = Vec::with_capacity(candidates.len());
    for (idx, cand) in candidates.iter().enumerate() {
        let rss = cand.rss(x, y);
        let penalty = complexity_penalty(cand.cardinality(), cand.rank(), p, q, m)?;
        let value = 0.5 * rss + a * sigma * sigma * penalty.total();
        scores.push(CriterionScore {
            candidate: idx,
            rss,
            penalty,
            value,
            excluded: false,
        });
    }
    let winner = pick_min(&scores)?;
    Ok((winner, scores))
}
