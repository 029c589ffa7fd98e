//! `autoode` command-line driver.

mod commands;
mod config;
mod gradcheck;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Data(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<autoode::Error> for CliError {
    fn from(e: autoode::Error) -> Self {
        if e.is_data_error() {
            CliError::Data(e.to_string())
        } else if matches!(e, autoode::Error::BadSpec(_)) {
            CliError::Usage(e.to_string())
        } else {
            CliError::Compute(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "autoode", version, about = "Fit, forecast and benchmark with differentiable ODE models")]
pub struct Cli {
    /// worker threads; falls back to AUTOODE_THREADS, then all cores
    #[arg(long, global = true, env = "AUTOODE_THREADS")]
    pub threads: Option<usize>,
    /// JSON config file; flags take precedence over its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a benchmark dataset archive
    Generate(GenerateArgs),
    /// Fit the multi-region COVID model and forecast one week
    FitCovid(FitCovidArgs),
    /// Score a model on a dataset archive
    Benchmark(BenchmarkArgs),
    /// Compare tape gradients with finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// sine, lv, fhn or seir
    #[arg(long)]
    pub system: String,
    /// data, param or init
    #[arg(long, default_value = "param")]
    pub shift: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// total samples across all splits
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitCovidArgs {
    /// directory holding confirmed.csv, recovered.csv, deaths.csv,
    /// population.csv and adjacency.csv
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub confirmed: Option<PathBuf>,
    #[arg(long)]
    pub recovered: Option<PathBuf>,
    #[arg(long)]
    pub deaths: Option<PathBuf>,
    #[arg(long)]
    pub population: Option<PathBuf>,
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
    /// first forecast day, YYYY-MM-DD
    #[arg(long)]
    pub week: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long)]
    pub breakpoints: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub quantiles: Option<Vec<f64>>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub alpha1: Option<f64>,
    #[arg(long)]
    pub alpha2: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Fc,
    Autoode,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, value_enum)]
    pub model: ModelKind,
    /// dataset archive written by `generate`
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// rebuild the extrapolation set as the interpolation set plus this offset
    #[arg(long)]
    pub shift_offset: Option<f64>,
    /// FC hidden widths
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// AutoODE: leading test samples fitted per split
    #[arg(long)]
    pub max_samples: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// finite-difference step, 1e-5 by default
    #[arg(long)]
    pub eps: Option<f64>,
    /// primitives, rk4, seir or sueir; all when omitted
    #[arg(long)]
    pub suite: Vec<String>,
    /// defaults to max(1e-5, 100·eps²)
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// directory for gradcheck.json
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Compute(e.to_string()))?;
    }
    let file = cli.config.as_deref();
    match cli.command {
        Command::Generate(a) => commands::generate(&a, file),
        Command::FitCovid(a) => commands::fit_covid(&a, file),
        Command::Benchmark(a) => commands::benchmark(&a, file),
        Command::Gradcheck(a) => commands::gradcheck(&a, file),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
