//! CSV ingestion and emission, plus the small grammar for grid flags.
//!
//! Matrix files carry one header row followed by purely numeric rows.
//! Ingestion is strict: every field must parse as a finite number, and
//! errors name the offending 1-based data row and column so the user can
//! jump straight to the cell.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::CliError;

pub struct Table {
    pub header: Vec<String>,
    pub matrix: DMatrix<f64>,
}

pub fn read_matrix_csv(path: &Path) -> Result<Table, CliError> {
    let place = path.display();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{place}: {e}")))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Input(format!("{place}: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() {
        return Err(CliError::Input(format!("{place}: empty header row")));
    }
    let cols = header.len();
    let mut values: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| CliError::Input(format!("{place}: data row {}: {e}", i + 1)))?;
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                CliError::Input(format!(
                    "{place}: data row {}, column {}: cannot parse '{field}' as a number",
                    i + 1,
                    j + 1
                ))
            })?;
            if !value.is_finite() {
                return Err(CliError::Input(format!(
                    "{place}: data row {}, column {}: non-finite value '{field}'",
                    i + 1,
                    j + 1
                )));
            }
            values.push(value);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::Input(format!("{place}: no data rows")));
    }
    Ok(Table {
        header,
        matrix: DMatrix::from_row_slice(rows, cols, &values),
    })
}

/// Writes with 17 significant digits so a read-back reproduces every f64
/// bit for bit.
pub fn write_matrix_csv(
    path: &Path,
    header: &[String],
    matrix: &DMatrix<f64>,
) -> Result<(), CliError> {
    let place = path.display();
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| CliError::Input(format!("{place}: {e}")))?;
    writer
        .write_record(header)
        .map_err(|e| CliError::Input(format!("{place}: {e}")))?;
    for i in 0..matrix.nrows() {
        let row: Vec<String> = (0..matrix.ncols())
            .map(|j| format!("{:.16e}", matrix[(i, j)]))
            .collect();
        writer
            .write_record(&row)
            .map_err(|e| CliError::Input(format!("{place}: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| CliError::Input(format!("{place}: {e}")))
}

/// Grid specs are comma-separated terms, each either a single size or a
/// range `a..b` with an optional stride `a..b:s`. "1..12", "2..50:2", and
/// "1,2,5..8" are all valid.
pub fn parse_grid(spec: &str, what: &str) -> Result<Vec<usize>, CliError> {
    let bad = |detail: String| CliError::Input(format!("--{what} '{spec}': {detail}"));
    let mut grid = Vec::new();
    for term in spec.split(',') {
        let term = term.trim();
        if term.is_empty() {
            continue;
        }
        if let Some((lo, rest)) = term.split_once("..") {
            let (hi, step) = match rest.split_once(':') {
                Some((hi, step)) => {
                    let step: usize = step
                        .trim()
                        .parse()
                        .map_err(|_| bad(format!("bad stride '{step}'")))?;
                    (hi, step)
                }
                None => (rest, 1),
            };
            let lo: usize = lo
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad bound '{lo}'")))?;
            let hi: usize = hi
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad bound '{hi}'")))?;
            if step == 0 {
                return Err(bad("stride must be positive".into()));
            }
            if hi < lo {
                return Err(bad(format!("range {lo}..{hi} is empty")));
            }
            grid.extend((lo..=hi).step_by(step));
        } else {
            grid.push(
                term.parse()
                    .map_err(|_| bad(format!("bad size '{term}'")))?,
            );
        }
    }
    if grid.is_empty() {
        return Err(bad("no sizes given".into()));
    }
    Ok(grid)
}

pub fn parse_lambdas(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = |detail: String| CliError::Input(format!("--lambdas '{spec}': {detail}"));
    let mut grid = Vec::new();
    for term in spec.split(',') {
        let term = term.trim();
        if term.is_empty() {
            continue;
        }
        let value: f64 = term
            .parse()
            .map_err(|_| bad(format!("cannot parse '{term}'")))?;
        if !value.is_finite() || value <= 0.0 {
            return Err(bad(format!("'{term}' is not a positive number")));
        }
        grid.push(value);
    }
    if grid.is_empty() {
        return Err(bad("no values given".into()));
    }
    Ok(grid)
}

/// File-name-safe form of a method name: "5-SCV(plugin)" becomes
/// "5-scv-plugin".
pub fn method_slug(name: &str) -> String {
    let mut slug = String::with_capacity(name.len());
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            slug.push(c.to_ascii_lowercase());
        } else if !slug.ends_with('-') {
            slug.push('-');
        }
    }
    slug.trim_matches('-').to_string()
}
