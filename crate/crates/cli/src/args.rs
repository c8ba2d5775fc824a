use std::path::PathBuf;
use std::str::FromStr;

use ako_core::{FdrMethod, LambdaPolicy};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ako", version, about = "Knockoff variable selection with aggregation of multiple knockoffs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset and write X.csv, y.csv, beta.csv and meta.json.
    Simulate(SimulateArgs),
    /// Run KO or AKO on a design and response read from CSV.
    Infer(InferArgs),
    /// Run a simulation experiment and write per-run records and a summary.
    Benchmark(BenchmarkArgs),
    /// Print the version.
    Version,
}

#[derive(Debug, Clone, Args)]
pub struct Shared {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path: a file for `infer` (stdout when absent), a directory
    /// otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub p: usize,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.06)]
    pub sparsity: f64,
    #[arg(long, default_value_t = 3.0)]
    pub snr: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[command(flatten)]
    pub sim: SimArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Ako,
    Ko,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FdrArg {
    Bh,
    By,
}

impl From<FdrArg> for FdrMethod {
    fn from(f: FdrArg) -> Self {
        match f {
            FdrArg::Bh => FdrMethod::Bh,
            FdrArg::By => FdrMethod::By,
        }
    }
}

/// `cv` or `fixed:<value>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaArg(pub LambdaPolicy);

impl FromStr for LambdaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "cv" {
            return Ok(LambdaArg(LambdaPolicy::Cv));
        }
        let value = s
            .strip_prefix("fixed:")
            .ok_or_else(|| format!("expected `cv` or `fixed:<value>`, got `{s}`"))?;
        let v: f64 = value
            .parse()
            .map_err(|_| format!("cannot parse `{value}` as a number"))?;
        Ok(LambdaArg(LambdaPolicy::Fixed(v)))
    }
}

impl std::fmt::Display for LambdaArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            LambdaPolicy::Cv => f.write_str("cv"),
            LambdaPolicy::Fixed(v) => write!(f, "fixed:{v}"),
        }
    }
}

/// `toeplitz:<rho>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleCov {
    pub rho: f64,
}

impl FromStr for OracleCov {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let value = s
            .strip_prefix("toeplitz:")
            .ok_or_else(|| format!("expected `toeplitz:<rho>`, got `{s}`"))?;
        let rho: f64 = value
            .parse()
            .map_err(|_| format!("cannot parse `{value}` as a number"))?;
        Ok(OracleCov { rho })
    }
}

impl std::fmt::Display for OracleCov {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "toeplitz:{}", self.rho)
    }
}

/// Knockoff settings shared by `infer` and `benchmark`.
#[derive(Debug, Clone, Args)]
pub struct AkoArgs {
    /// Target FDR level.
    #[arg(long, default_value_t = 0.1)]
    pub fdr: f64,
    #[arg(long, default_value_t = 25)]
    pub bootstraps: usize,
    #[arg(long, default_value_t = 0.3)]
    pub gamma: f64,
    /// Offset `c` of the intermediate p-values.
    #[arg(long, default_value_t = 1.0)]
    pub offset: f64,
    #[arg(long, value_enum, default_value_t = FdrArg::Bh)]
    pub fdr_method: FdrArg,
    /// Run the step-up at `fdr / κ`.
    #[arg(long)]
    pub kappa_correct: bool,
    /// `cv` or `fixed:<value>`.
    #[arg(long, default_value = "cv")]
    pub lambda: LambdaArg,
}

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[arg(long, value_enum, default_value_t = MethodArg::Ako)]
    pub method: MethodArg,
    /// Design matrix, one row per observation.
    #[arg(long)]
    pub x: PathBuf,
    /// Response, one value per row.
    #[arg(long)]
    pub y: PathBuf,
    #[command(flatten)]
    pub ako: AkoArgs,
    /// Use a known covariance instead of estimating it.
    #[arg(long)]
    pub oracle_cov: Option<OracleCov>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Stability,
    Grid,
    Bgamma,
    Spearman,
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub ako: AkoArgs,
    /// AKO runs of the stability experiment.
    #[arg(long, default_value_t = 20)]
    pub ako_runs: usize,
    /// KO runs of the stability experiment.
    #[arg(long, default_value_t = 500)]
    pub ko_runs: usize,
    /// Runs per cell (grid) or paired runs (bgamma).
    #[arg(long, default_value_t = 30)]
    pub runs: usize,
    /// Grid over rho.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["sparsity_list", "snr_list"])]
    pub rho_list: Option<Vec<f64>>,
    /// Grid over sparsity.
    #[arg(long, value_delimiter = ',', conflicts_with = "snr_list")]
    pub sparsity_list: Option<Vec<f64>>,
    /// Grid over SNR.
    #[arg(long, value_delimiter = ',')]
    pub snr_list: Option<Vec<f64>>,
    /// Methods of the grid experiment.
    #[arg(long, value_delimiter = ',', default_value = "ako,ko")]
    pub methods: Vec<MethodArg>,
    #[arg(long, value_delimiter = ',', default_value = "1,5,25,50")]
    pub b_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,1.0")]
    pub gamma_list: Vec<f64>,
    /// Datasets of the Spearman diagnostic.
    #[arg(long, default_value_t = 100)]
    pub observations: usize,
    /// Null pairs sampled by the Spearman diagnostic.
    #[arg(long, default_value_t = 500)]
    pub pairs: usize,
}
