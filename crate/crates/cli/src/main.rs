//! `srrr`: model selection for jointly row-sparse and rank-deficient
//! multivariate regression from the command line.
//!
//! Exit codes: 0 success, 2 bad input, 3 numerical failure, 64 usage error.

mod commands;
mod error;
mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use srrr_core::resampling::{SCV_ALPHA1, SCV_ALPHA2};
use srrr_core::sim::DEFAULT_PIC_A;

#[derive(Parser)]
#[command(
    name = "srrr",
    version,
    about = "Model selection for jointly row-sparse, rank-deficient multivariate regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the candidate path on CSV data and select with one or more criteria
    Select(SelectArgs),
    /// Replicated synthetic-data comparison of selection methods
    Simulate(SimulateArgs),
    /// Monte-Carlo check that CV-Err minus Trn-Err matches its closed form
    Identity(IdentityArgs),
    /// Fold-wise support-size spread of a fixed-penalty path (single response)
    Audit(AuditArgs),
    /// Row-resampling stability of selection on a fixed dataset
    Bootstrap(BootstrapArgs),
}

#[derive(Args)]
struct SelectArgs {
    /// Design matrix CSV: header row, then n rows of p numeric columns
    #[arg(long)]
    x: PathBuf,
    /// Response matrix CSV: header row, then n rows of m numeric columns
    #[arg(long)]
    y: PathBuf,
    /// Comma-separated criteria, e.g. "PIC-recommended,5-CV,5-SCV(plugin)".
    /// Bare "CV", "SCV(plugin)", "SCV(fractional)" take --k-folds.
    #[arg(long, default_value = "PIC-recommended,PIC,SCV(plugin)")]
    methods: String,
    /// Fold count for methods named without one
    #[arg(long, default_value_t = 5)]
    k_folds: usize,
    /// Support sizes to visit, e.g. "1..12" or "2..50:2" (default: fitted to the data)
    #[arg(long)]
    grid_j: Option<String>,
    /// Ranks to visit, same syntax (default: fitted to the data)
    #[arg(long)]
    grid_r: Option<String>,
    /// Weight on the degrees-of-freedom term of the additive calibration
    #[arg(long, default_value_t = SCV_ALPHA1)]
    alpha1: f64,
    /// Weight on the inflation term of the additive calibration
    #[arg(long, default_value_t = SCV_ALPHA2)]
    alpha2: f64,
    /// Multiplier on the complexity penalty of the plug-in criterion
    #[arg(long, default_value_t = DEFAULT_PIC_A)]
    pic_a: f64,
    /// Seed for the fold assignment
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the report and coefficient files
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Sample size per replication
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Number of predictors
    #[arg(long, default_value_t = 60)]
    p: usize,
    /// Number of responses
    #[arg(long, default_value_t = 15)]
    m: usize,
    /// Rows of the planted support
    #[arg(long, default_value_t = 30)]
    j_true: usize,
    /// Rank of the planted coefficient matrix
    #[arg(long, default_value_t = 5)]
    r_true: usize,
    /// AR(1) correlation of the design covariance
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
    /// Signal amplitude of the planted block
    #[arg(long, default_value_t = 0.1)]
    b: f64,
    /// Noise standard deviation
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Number of replications
    #[arg(long, default_value_t = 50)]
    reps: usize,
    /// Comma-separated criteria to compare
    #[arg(long, default_value = "PIC-recommended,PIC,5-CV,5-SCV(plugin)")]
    methods: String,
    /// Fold count for methods named without one
    #[arg(long, default_value_t = 5)]
    k_folds: usize,
    /// Support sizes to visit (default: fitted to the dimensions)
    #[arg(long)]
    grid_j: Option<String>,
    /// Ranks to visit (default: fitted to the dimensions)
    #[arg(long)]
    grid_r: Option<String>,
    /// Multiplier on the complexity penalty of the plug-in criterion
    #[arg(long, default_value_t = DEFAULT_PIC_A)]
    pic_a: f64,
    /// Base seed; replication i uses seed + i
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the report and the replication log
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct IdentityArgs {
    /// Sample size; must be a multiple of the fold count
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Fold count
    #[arg(long, default_value_t = 5)]
    k_folds: usize,
    /// Noise standard deviation
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Monte-Carlo replications
    #[arg(long, default_value_t = 5000)]
    reps: usize,
    /// Base seed; replication i uses seed + i
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Use the misspecified fixture whose pattern misses a true predictor
    #[arg(long)]
    underfit: bool,
    /// Output directory for the report
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    /// Design matrix CSV: header row, then n rows of p numeric columns
    #[arg(long)]
    x: PathBuf,
    /// Response CSV: header row, then n rows of exactly one numeric column
    #[arg(long)]
    y: PathBuf,
    /// Fold count
    #[arg(long, default_value_t = 5)]
    k_folds: usize,
    /// Comma-separated penalty levels (default: log-spaced from the data)
    #[arg(long)]
    lambdas: Option<String>,
    /// Size of the default penalty grid
    #[arg(long, default_value_t = 12)]
    grid_points: usize,
    /// Seed for the fold assignment
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the CSV and the report
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct BootstrapArgs {
    /// Design matrix CSV: header row, then n rows of p numeric columns
    #[arg(long)]
    x: PathBuf,
    /// Response matrix CSV: header row, then n rows of m numeric columns
    #[arg(long)]
    y: PathBuf,
    /// Comma-separated criteria, one stability report each
    #[arg(long, default_value = "PIC-recommended")]
    methods: String,
    /// Fold count for methods named without one
    #[arg(long, default_value_t = 5)]
    k_folds: usize,
    /// Number of row resamples
    #[arg(long, default_value_t = 200)]
    reps: usize,
    /// Support sizes to visit (default: fitted to the data)
    #[arg(long)]
    grid_j: Option<String>,
    /// Ranks to visit (default: fitted to the data)
    #[arg(long)]
    grid_r: Option<String>,
    /// Multiplier on the complexity penalty of the plug-in criterion
    #[arg(long, default_value_t = DEFAULT_PIC_A)]
    pic_a: f64,
    /// Base seed for the resamples
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the per-method reports
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn init_thread_pool() {
    // Honor SRRR_THREADS when set; rayon otherwise sizes itself to the host.
    if let Some(threads) = std::env::var("SRRR_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t >= 1)
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let exit = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = err.print();
            std::process::exit(exit);
        }
    };
    init_thread_pool();
    let outcome = match &cli.command {
        Command::Select(args) => commands::select(args),
        Command::Simulate(args) => commands::simulate(args),
        Command::Identity(args) => commands::identity(args),
        Command::Audit(args) => commands::audit(args),
        Command::Bootstrap(args) => commands::bootstrap(args),
    };
    if let Err(err) = outcome {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
