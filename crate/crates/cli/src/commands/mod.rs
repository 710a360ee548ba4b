//! One module per subcommand plus the plumbing they share.

mod audit;
mod bootstrap;
mod identity;
mod select;
mod simulate;

pub use audit::audit;
pub use bootstrap::bootstrap;
pub use identity::identity;
pub use select::select;
pub use simulate::simulate;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use srrr_core::data::RegressionData;
use srrr_core::path::PathConfig;
use srrr_core::sim::Method;

use crate::error::CliError;
use crate::io;

/// Parses a comma-separated method list. Names without a fold count ("CV",
/// "SCV(plugin)", "SCV(fractional)") resolve against `default_k`; duplicates
/// collapse to one run.
pub(crate) fn parse_methods(spec: &str, default_k: usize) -> Result<Vec<Method>, CliError> {
    if default_k < 2 {
        return Err(CliError::Input(format!(
            "--k-folds {default_k}: need at least 2 folds"
        )));
    }
    let mut methods: Vec<Method> = Vec::new();
    for name in spec.split(',') {
        let name = name.trim();
        if name.is_empty() {
            continue;
        }
        let method = match name.parse::<Method>() {
            Ok(method) => method,
            Err(err) => match name.to_ascii_uppercase().as_str() {
                "CV" => Method::Cv(default_k),
                "SCV" | "SCV(PLUGIN)" => Method::ScvPlugin(default_k),
                "SCV(FRACTIONAL)" => Method::ScvFractional(default_k),
                _ => return Err(CliError::Input(err.to_string())),
            },
        };
        if !methods.contains(&method) {
            methods.push(method);
        }
    }
    if methods.is_empty() {
        return Err(CliError::Input(format!(
            "--methods '{spec}': no methods given"
        )));
    }
    Ok(methods)
}

/// Standard grids for the data dimensions unless the flags override them.
pub(crate) fn path_config_for(
    n: usize,
    p: usize,
    m: usize,
    grid_j: Option<&str>,
    grid_r: Option<&str>,
    seed: u64,
) -> Result<PathConfig, CliError> {
    let mut cfg = PathConfig::for_data(n, p, m)?;
    if let Some(spec) = grid_j {
        cfg.j_grid = io::parse_grid(spec, "grid-j")?;
    }
    if let Some(spec) = grid_r {
        cfg.r_grid = io::parse_grid(spec, "grid-r")?;
    }
    cfg.seed = seed;
    Ok(cfg)
}

/// Reads the X and Y files and pairs them up; returns the Y header for
/// labeling coefficient output.
pub(crate) fn load_data(
    x_path: &Path,
    y_path: &Path,
) -> Result<(Vec<String>, RegressionData), CliError> {
    let x = io::read_matrix_csv(x_path)?;
    let y = io::read_matrix_csv(y_path)?;
    if x.matrix.nrows() != y.matrix.nrows() {
        return Err(CliError::Input(format!(
            "dimension mismatch: {} has {} data rows but {} has {}",
            x_path.display(),
            x.matrix.nrows(),
            y_path.display(),
            y.matrix.nrows()
        )));
    }
    let data = RegressionData::new(x.matrix, y.matrix)?;
    Ok((y.header, data))
}

pub(crate) fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file =
        File::create(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, value)?;
    writeln!(writer)?;
    Ok(())
}

/// One criterion value in a report. JSON has no ±∞, so the numeric field
/// empties out exactly where `excluded` flags the candidate.
#[derive(Serialize)]
pub(crate) struct ScoreCell {
    pub candidate: usize,
    pub value: Option<f64>,
    pub excluded: bool,
}

pub(crate) fn score_cells(values: &[f64]) -> Vec<ScoreCell> {
    values
        .iter()
        .enumerate()
        .map(|(candidate, &value)| ScoreCell {
            candidate,
            value: value.is_finite().then_some(value),
            excluded: !value.is_finite(),
        })
        .collect()
}
