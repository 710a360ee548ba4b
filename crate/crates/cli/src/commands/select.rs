//! The `select` subcommand: fit the candidate path on user data, run every
//! requested criterion, and write one coefficient file per method plus a
//! combined JSON report with full per-candidate score tables.

use serde::Serialize;

use srrr_core::criteria::{self, ClassicalIc};
use srrr_core::data::RegressionData;
use srrr_core::linalg;
use srrr_core::path::{solution_path, PathConfig};
use srrr_core::patterns::CandidateModel;
use srrr_core::resampling::{
    make_folds, scv_evaluate_with, SCV_FRACTIONAL_ALPHA1, SCV_FRACTIONAL_ALPHA2,
};
use srrr_core::sim::{noise_scale_estimate, select_model, Method, SelectionSettings};

use super::{
    ensure_dir, load_data, parse_methods, path_config_for, score_cells, write_json, ScoreCell,
};
use crate::error::CliError;
use crate::io;
use crate::SelectArgs;

#[derive(Serialize)]
struct CandidateRow {
    index: usize,
    support: Vec<usize>,
    rank: usize,
    rss: f64,
}

#[derive(Serialize)]
struct SelectionOutcome {
    method: String,
    support: Vec<usize>,
    rank: usize,
    cardinality: usize,
    rss: f64,
    coefficients_csv: String,
    /// Per-candidate criterion values; absent for conventional CV, whose
    /// scores attach to fold reruns rather than to the full-data candidates.
    scores: Option<Vec<ScoreCell>>,
}

#[derive(Serialize)]
struct SelectReport {
    version: String,
    command: String,
    x: String,
    y: String,
    n: usize,
    p: usize,
    m: usize,
    design_rank: usize,
    k_folds: usize,
    alpha1: f64,
    alpha2: f64,
    pic_a: f64,
    seed: u64,
    noise_scale_estimate: f64,
    path: PathConfig,
    candidates: Vec<CandidateRow>,
    selections: Vec<SelectionOutcome>,
}

pub fn select(args: &SelectArgs) -> Result<(), CliError> {
    let (y_header, data) = load_data(&args.x, &args.y)?;
    let methods = parse_methods(&args.methods, args.k_folds)?;
    let path_cfg = path_config_for(
        data.n(),
        data.p(),
        data.m(),
        args.grid_j.as_deref(),
        args.grid_r.as_deref(),
        args.seed,
    )?;
    let path = solution_path(&data, &path_cfg)?;
    let candidates = path.candidates();
    if candidates.is_empty() {
        return Err(CliError::Numeric(
            "no candidate fit survived the path".into(),
        ));
    }
    let sigma_hat = noise_scale_estimate(&data);
    let design_rank = linalg::numerical_rank(data.x());
    let settings = SelectionSettings {
        pic_sigma: sigma_hat,
        pic_a: args.pic_a,
        scv_alpha: (args.alpha1, args.alpha2),
        scv_fractional_alpha: (SCV_FRACTIONAL_ALPHA1, SCV_FRACTIONAL_ALPHA2),
        fold_seed: args.seed,
    };
    ensure_dir(&args.out)?;

    let mut selections = Vec::with_capacity(methods.len());
    for &method in &methods {
        let model = select_model(&data, &path, &candidates, method, &path_cfg, &settings)?;
        let scores = score_table(&data, &candidates, method, &settings, design_rank)?;
        let name = method.to_string();
        let file_name = format!("coefficients_{}.csv", io::method_slug(&name));
        io::write_matrix_csv(&args.out.join(&file_name), &y_header, model.coefficients())?;
        let rss = model.rss(data.x(), data.y());
        println!(
            "{name}: J = {}, r = {}, rss = {:.6e}, support = {:?}",
            model.cardinality(),
            model.rank(),
            rss,
            model.pattern().support()
        );
        selections.push(SelectionOutcome {
            method: name,
            support: model.pattern().support().to_vec(),
            rank: model.rank(),
            cardinality: model.cardinality(),
            rss,
            coefficients_csv: file_name,
            scores,
        });
    }

    let report = SelectReport {
        version: srrr_core::library_version().to_string(),
        command: "select".into(),
        x: args.x.display().to_string(),
        y: args.y.display().to_string(),
        n: data.n(),
        p: data.p(),
        m: data.m(),
        design_rank,
        k_folds: args.k_folds,
        alpha1: args.alpha1,
        alpha2: args.alpha2,
        pic_a: args.pic_a,
        seed: args.seed,
        noise_scale_estimate: sigma_hat,
        path: path_cfg,
        candidates: candidates
            .iter()
            .enumerate()
            .map(|(index, c)| CandidateRow {
                index,
                support: c.pattern().support().to_vec(),
                rank: c.rank(),
                rss: c.rss(data.x(), data.y()),
            })
            .collect(),
        selections,
    };
    let report_path = args.out.join("select_report.json");
    write_json(&report_path, &report)?;
    println!("report: {}", report_path.display());
    Ok(())
}

/// Recomputes the full score vector a method saw, one value per candidate.
/// SCV scores reuse the selection's fold seed, so the table shows exactly
/// the numbers the winner beat.
fn score_table(
    data: &RegressionData,
    candidates: &[CandidateModel],
    method: Method,
    settings: &SelectionSettings,
    design_rank: usize,
) -> Result<Option<Vec<ScoreCell>>, CliError> {
    let (n, p, m) = (data.n(), data.p(), data.m());
    let values: Option<Vec<f64>> = match method {
        Method::Aic | Method::Bic | Method::Ebic => {
            let kind = match method {
                Method::Aic => ClassicalIc::Aic,
                Method::Bic => ClassicalIc::Bic,
                _ => ClassicalIc::Ebic,
            };
            Some(
                candidates
                    .iter()
                    .map(|c| {
                        let rss = c.rss(data.x(), data.y()).max(f64::MIN_POSITIVE);
                        let df = (c.cardinality() + m - c.rank()) as f64 * c.rank() as f64;
                        criteria::classical_ic(rss, df, m, n, p, c.cardinality(), kind)
                    })
                    .collect(),
            )
        }
        Method::Pic => {
            let (_, scores) = criteria::pic_select(
                candidates,
                data.x(),
                data.y(),
                settings.pic_sigma.max(1e-12),
                settings.pic_a,
            )?;
            Some(scores.into_iter().map(|s| s.value).collect())
        }
        Method::PicRecommended => {
            let mut values = Vec::with_capacity(candidates.len());
            for c in candidates {
                let rss = c.rss(data.x(), data.y());
                let pen =
                    criteria::complexity_penalty(c.cardinality(), c.rank(), p, design_rank, m)?;
                values.push(criteria::pic_recommended(rss, pen.df, pen.inflation, m, n));
            }
            Some(values)
        }
        Method::Cv(_) => None,
        Method::ScvPlugin(k) | Method::ScvFractional(k) => {
            let plan = make_folds(n, k, settings.fold_seed)?;
            let patterns: Vec<_> = candidates.iter().map(|c| c.pattern().clone()).collect();
            let report = scv_evaluate_with(
                data,
                &patterns,
                &plan,
                settings.scv_alpha.0,
                settings.scv_alpha.1,
            )?;
            Some(match method {
                Method::ScvPlugin(_) => report.entries.iter().map(|e| e.calibrated).collect(),
                _ => report.fractional_scores(
                    m,
                    n,
                    settings.scv_fractional_alpha.0,
                    settings.scv_fractional_alpha.1,
                ),
            })
        }
    };
    Ok(values.map(|v| score_cells(&v)))
}
