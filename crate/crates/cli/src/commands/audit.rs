//! The `audit` subcommand: for each penalty level, run a fixed-penalty
//! coordinate-descent path on every fold training set and report the spread
//! of selected support sizes. Any spread demonstrates that the folds of a
//! conventional CV disagree about which model a tuning value names.

use std::fs::File;
use std::io::BufWriter;

use serde::Serialize;

use srrr_core::data::RegressionData;
use srrr_core::sim::{inconsistency_audit, write_audit_csv, AuditRow};

use super::{ensure_dir, load_data, write_json};
use crate::error::CliError;
use crate::io;
use crate::AuditArgs;

#[derive(Serialize)]
struct AuditDocument {
    version: String,
    command: String,
    x: String,
    y: String,
    k_folds: usize,
    seed: u64,
    lambdas: Vec<f64>,
    unstable_levels: usize,
    rows: Vec<AuditRow>,
}

/// Log-spaced levels between 0.6 and 0.02 of the value that zeroes every
/// coordinate.
fn default_lambda_grid(data: &RegressionData, points: usize) -> Result<Vec<f64>, CliError> {
    if points < 2 {
        return Err(CliError::Input(format!(
            "--grid-points {points}: need at least 2"
        )));
    }
    let gradient = data.x().transpose() * data.y();
    let lambda_max = gradient.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if lambda_max <= 0.0 {
        return Err(CliError::Numeric(
            "the response is orthogonal to every predictor; no penalty grid exists".into(),
        ));
    }
    let hi = 0.6 * lambda_max;
    let ratio: f64 = 0.02 / 0.6;
    Ok((0..points)
        .map(|i| hi * ratio.powf(i as f64 / (points - 1) as f64))
        .collect())
}

pub fn audit(args: &AuditArgs) -> Result<(), CliError> {
    let (_, data) = load_data(&args.x, &args.y)?;
    let lambdas = match &args.lambdas {
        Some(spec) => io::parse_lambdas(spec)?,
        None => default_lambda_grid(&data, args.grid_points)?,
    };
    let rows = inconsistency_audit(&data, &lambdas, args.k_folds, args.seed)?;
    let unstable_levels = rows.iter().filter(|r| r.max_card > r.min_card).count();
    println!(
        "{unstable_levels} of {} penalty levels gave fold-dependent support sizes",
        rows.len()
    );

    ensure_dir(&args.out)?;
    let csv_path = args.out.join("audit.csv");
    let csv_file = File::create(&csv_path)
        .map_err(|e| CliError::Input(format!("{}: {e}", csv_path.display())))?;
    write_audit_csv(&rows, BufWriter::new(csv_file))?;
    let report_path = args.out.join("audit_report.json");
    write_json(
        &report_path,
        &AuditDocument {
            version: srrr_core::library_version().to_string(),
            command: "audit".into(),
            x: args.x.display().to_string(),
            y: args.y.display().to_string(),
            k_folds: args.k_folds,
            seed: args.seed,
            lambdas,
            unstable_levels,
            rows,
        },
    )?;
    println!("csv: {}; report: {}", csv_path.display(), report_path.display());
    Ok(())
}
