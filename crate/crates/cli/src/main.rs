mod commands;
mod config_file;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "acir", version, about = "Conformal prediction intervals around invariant linear predictors")]
#[command(args_override_self = true)]
struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Read `key = value` flag defaults from a file; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Replicated coverage experiments.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Synthetic data generation.
    #[command(subcommand)]
    Datagen(DatagenCommand),
    /// Fit an IRMv1 (or ERM) model on a multi-environment CSV.
    Fit(FitCmd),
    /// Compute calibration scores and moments for a fitted model.
    Calibrate(CalibrateCmd),
    /// Invariance statistic of a fitted model across environments.
    Assess(AssessCmd),
    /// Prediction intervals for new points.
    Predict(PredictCmd),
}

#[derive(Debug, Subcommand)]
enum BenchCommand {
    /// Run methods over settings and replications, writing CSV outputs.
    Run(Box<RunCmd>),
    /// Mean and sample standard deviation per method, setting and scope.
    Summarize(SummarizeCmd),
}

#[derive(Debug, Subcommand)]
enum DatagenCommand {
    /// Linear structural-equation benchmark data.
    Sem(SemCmd),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Lbfgs,
    Gd,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// IRMv1 penalty weight.
    #[arg(long, default_value_t = 1e4)]
    lambda: f64,
    /// First trial step of the line search.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    /// Gradient-norm stopping tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    /// Relative objective-decrease stopping tolerance.
    #[arg(long, default_value_t = 0.0)]
    f_tolerance: f64,
    /// Unpenalized iterations before the penalty is switched on.
    #[arg(long, default_value_t = 100)]
    warmup_iters: usize,
    /// Standard deviation of the initial weights.
    #[arg(long, default_value_t = 0.1)]
    init_std: f64,
    /// Representation dimension (default: max(p, 2)).
    #[arg(long)]
    repr_dim: Option<usize>,
    #[arg(long, value_enum, default_value = "lbfgs")]
    optimizer: OptimizerArg,
    #[arg(long, default_value_t = 10)]
    lbfgs_memory: usize,
}

#[derive(Debug, Args)]
struct RunCmd {
    /// Comma-separated settings (FOU, FEU, POU, PEU, all) or `csv:<path>`.
    #[arg(long, default_value = "FOU")]
    setting: String,
    /// Environment ids held out as test data when the setting is a CSV.
    #[arg(long, value_delimiter = ',')]
    test_envs: Vec<i64>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Comma-separated subset of sc-erm, sc-irm, ac-erm, ac-irm, or `all`.
    #[arg(long, default_value = "all")]
    methods: String,
    #[arg(long, default_value_t = 2000)]
    n_train: usize,
    #[arg(long, default_value_t = 2000)]
    n_cal: usize,
    #[arg(long, default_value_t = 2000)]
    n_test: usize,
    /// Comma-separated SEM environment parameters.
    #[arg(long, value_delimiter = ',', default_value = "0.2,2,5")]
    env_params: Vec<f64>,
    /// Keep the data fixed and only redraw the splits.
    #[arg(long)]
    resplit_only: bool,
    /// Also write the invariance statistic of each fitted model.
    #[arg(long)]
    invariance: bool,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Debug, Args)]
struct SummarizeCmd {
    #[arg(long = "in")]
    input: PathBuf,
    /// Write the summary here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SemCmd {
    #[arg(long)]
    setting: String,
    /// Total rows, split evenly across environments.
    #[arg(long, default_value_t = 6000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "0.2,2,5")]
    env_params: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FitCmd {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Pooled least squares instead of IRMv1.
    #[arg(long)]
    erm: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Debug, Args)]
struct CalibrateCmd {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AssessCmd {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum IntervalMethod {
    Sc,
    Acir,
}

#[derive(Debug, Args)]
struct PredictCmd {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    calibration: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// CSV of points: either `x1,..,xp` or the dataset layout `env,y,x1,..,xp`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "acir")]
    method: IntervalMethod,
    /// Widen adaptive intervals by the weighted δ values of an `assess` report.
    #[arg(long)]
    inflate: Option<PathBuf>,
    /// Write intervals here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let argv = match config_file::expand(std::env::args().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(path) = &cli.config {
        log::info!("flag defaults from {}", path.display());
    }

    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(commands::Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
