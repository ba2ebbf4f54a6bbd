use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "wnb",
    version,
    about = "Sparse weighted naive Bayes: train, predict, evaluate, benchmark"
)]
pub struct Cli {
    /// TOML file with default settings; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model on a CSV file and write model.json and trace.csv.
    Train(TrainArgs),
    /// Write per-instance class probabilities for a CSV file.
    Predict(PredictArgs),
    /// Score a saved model on a labelled CSV file.
    Evaluate(PredictArgs),
    /// Cross-validate several methods on the same folds.
    Benchmark(BenchArgs),
    /// Benchmark over a grid of one hyperparameter (needs --sweep).
    Sweep(BenchArgs),
}

/// Settings shared by every training command.
#[derive(Debug, Clone, Default, Args)]
pub struct Hyper {
    #[arg(long, value_name = "CSV")]
    pub data: Option<PathBuf>,
    /// Name of the class column.
    #[arg(long)]
    pub target: Option<String>,
    /// Regularization weight (default 0.25).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Penalty exponent in (0, 1] (default 0.95).
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Stopping tolerance of the gradient methods (default 0.01).
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Start of the gradient methods: uniform, snb or fnb (default fnb).
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV of `variable,cost` rows replacing the default costs.
    #[arg(long, value_name = "FILE")]
    pub costs: Option<PathBuf>,
    /// Maximum number of bins per numerical variable.
    #[arg(long)]
    pub max_parts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub hyper: Hyper,
    /// sg, am, sg.cf, sg.ue, ug.cf, ug.ue, cg.cf, cg.ue, snb, fnb, nb, null,
    /// or `init+method` such as fnb+sg.cf (default sg.cf).
    #[arg(long)]
    pub method: Option<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    pub data: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Lambda,
    P,
    Epsilon,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub hyper: Hyper,
    /// Methods to compare, comma separated or repeated.
    #[arg(long = "method", value_delimiter = ',')]
    pub methods: Vec<String>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Output directory for report.csv and summary.json.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub sweep: Option<SweepParam>,
    /// Record training times in the report (makes it non-reproducible).
    #[arg(long)]
    pub timings: bool,
}
