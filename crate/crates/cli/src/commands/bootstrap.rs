//! The `bootstrap` subcommand: resample rows with replacement, rerun path
//! and selection per resample, and report how stable each method's choice
//! of support size, rank, and predictors is.

use serde::Serialize;

use srrr_core::sim::{bootstrap_stability, BootstrapReport};

use super::{ensure_dir, load_data, parse_methods, path_config_for, write_json};
use crate::error::CliError;
use crate::io;
use crate::BootstrapArgs;

#[derive(Serialize)]
struct BootstrapDocument {
    version: String,
    command: String,
    x: String,
    y: String,
    pic_a: f64,
    report: BootstrapReport,
}

pub fn bootstrap(args: &BootstrapArgs) -> Result<(), CliError> {
    let (_, data) = load_data(&args.x, &args.y)?;
    let methods = parse_methods(&args.methods, args.k_folds)?;
    let path_cfg = path_config_for(
        data.n(),
        data.p(),
        data.m(),
        args.grid_j.as_deref(),
        args.grid_r.as_deref(),
        args.seed,
    )?;
    ensure_dir(&args.out)?;

    for &method in &methods {
        let report = bootstrap_stability(&data, method, &path_cfg, args.reps, args.seed, args.pic_a)?;
        let name = method.to_string();
        let modal_j = report
            .j_counts
            .iter()
            .max_by_key(|(_, &count)| count)
            .map(|(&j, &count)| (j, count));
        let modal_r = report
            .r_counts
            .iter()
            .max_by_key(|(_, &count)| count)
            .map(|(&r, &count)| (r, count));
        match (modal_j, modal_r) {
            (Some((j, jc)), Some((r, rc))) => println!(
                "{name}: {} of {} resamples usable; modal J = {j} ({jc}x), modal r = {r} ({rc}x)",
                report.resamples, args.reps
            ),
            _ => println!(
                "{name}: {} of {} resamples usable",
                report.resamples, args.reps
            ),
        }
        let report_path = args
            .out
            .join(format!("bootstrap_{}.json", io::method_slug(&name)));
        write_json(
            &report_path,
            &BootstrapDocument {
                version: srrr_core::library_version().to_string(),
                command: "bootstrap".into(),
                x: args.x.display().to_string(),
                y: args.y.display().to_string(),
                pic_a: args.pic_a,
                report,
            },
        )?;
        println!("report: {}", report_path.display());
    }
    Ok(())
}
