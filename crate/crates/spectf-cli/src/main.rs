//! `spectf` — adaptive scalar-on-function regression from the command line.
//!
//! Subcommands: `fit`, `predict`, `bootstrap`, `cv`, `simulate`, `benchmark`.
//! Every run writes its fully resolved configuration next to its outputs and
//! is a pure function of (input files, flags, seed): reruns are byte
//! identical, whatever `--threads` says.
//!
//! Exit codes: 0 success, 1 usage error, 2 data validation error,
//! 3 numerical failure.

mod commands;
mod pipeline;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser, Serialize)]
#[command(name = "spectf", version, about = "Trend-filtering regression for spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
enum Command {
    /// Fit a model to a spectra CSV, selecting penalties by CV or holdout.
    Fit(FitArgs),
    /// Cross-validate a penalty grid and write the score table.
    Cv(FitArgs),
    /// Predict new spectra with a fitted model.
    Predict(PredictArgs),
    /// Wild-bootstrap variability bands for a Gaussian fit.
    Bootstrap(BootstrapArgs),
    /// Generate a synthetic dataset.
    Simulate(SimulateArgs),
    /// Run the synthetic benchmark over scenarios, targets and estimators.
    Benchmark(BenchmarkArgs),
}

#[derive(Args, Serialize, Clone)]
struct FitArgs {
    /// Wide-format spectra CSV.
    #[arg(long)]
    data: String,
    /// Optional JSON schema describing column roles.
    #[arg(long)]
    schema: Option<String>,
    /// Response family.
    #[arg(long, default_value = "gaussian")]
    family: String,
    /// Penalized derivative order(s), e.g. `4` or `4,1`.
    #[arg(long, default_value = "4")]
    orders: String,
    /// Fixed penalty weight(s) matching --orders; skips tuning.
    #[arg(long)]
    lambda: Option<String>,
    /// K-fold cross-validation for penalty selection.
    #[arg(long)]
    cv: Option<usize>,
    /// Holdout CSV for penalty selection instead of CV.
    #[arg(long)]
    holdout: Option<String>,
    /// Aggregate this many adjacent wavelengths before fitting.
    #[arg(long)]
    aggregate: Option<usize>,
    /// Model the natural log of the response.
    #[arg(long)]
    log_response: bool,
    /// Drop the constant intercept covariate.
    #[arg(long)]
    no_intercept: bool,
    /// Center and scale the spectra columns before fitting.
    #[arg(long)]
    standardize: bool,
    /// RNG seed (falls back to SPECTF_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    threads: Option<usize>,
    /// Output path (model JSON for `fit`, score CSV for `cv`).
    #[arg(long)]
    out: String,
}

#[derive(Args, Serialize, Clone)]
struct PredictArgs {
    /// Fitted model JSON.
    #[arg(long)]
    model: String,
    /// New spectra CSV at the model's raw resolution.
    #[arg(long)]
    data: String,
    /// Optional JSON schema describing column roles.
    #[arg(long)]
    schema: Option<String>,
    /// Predictions CSV path.
    #[arg(long)]
    out: String,
}

#[derive(Args, Serialize, Clone)]
struct BootstrapArgs {
    /// Fitted Gaussian model JSON.
    #[arg(long)]
    model: String,
    /// The training spectra CSV.
    #[arg(long)]
    data: String,
    /// Optional JSON schema describing column roles.
    #[arg(long)]
    schema: Option<String>,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = 1000)]
    boot: usize,
    /// Confidence level of the bands.
    #[arg(long, default_value_t = 0.95)]
    conf: f64,
    /// Auxiliary law: mammen, rademacher or uniform.
    #[arg(long, default_value = "mammen")]
    law: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Bands CSV path; scalar intervals go to `<stem>_scalars.csv`.
    #[arg(long)]
    out: String,
}

#[derive(Args, Serialize, Clone)]
struct SimulateArgs {
    /// Scenario: a (Gaussian), b (Gaussian + scalars), c (Bernoulli).
    #[arg(long)]
    scenario: String,
    /// Target coefficient: f1, f2 or f3.
    #[arg(long)]
    target: String,
    #[arg(long, default_value_t = 250)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    p: usize,
    /// Signal-to-noise ratio (sd of signal over sd of noise).
    #[arg(long, default_value_t = 4.0)]
    snr: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset CSV path; the truth goes to `<stem>_truth.csv`.
    #[arg(long)]
    out: String,
}

#[derive(Args, Serialize, Clone)]
struct BenchmarkArgs {
    /// Repetitions per scenario/target cell.
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 250)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    p: usize,
    #[arg(long, default_value_t = 4.0)]
    snr: f64,
    #[arg(long)]
    threads: Option<usize>,
    /// Benchmark CSV path.
    #[arg(long)]
    out: String,
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.or_else(|| {
        std::env::var("SPECTF_SEED")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(0)
}

fn init_threads(threads: Option<usize>) {
    if let Some(t) = threads {
        // Ignore the error if a pool already exists (tests call this twice).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global();
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's own help/version output exits 0; anything else is usage.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Fit(args) => commands::fit(&args, false),
        Command::Cv(args) => commands::fit(&args, true),
        Command::Predict(args) => commands::predict_cmd(&args),
        Command::Bootstrap(args) => commands::bootstrap(&args),
        Command::Simulate(args) => commands::simulate(&args),
        Command::Benchmark(args) => commands::benchmark(&args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
