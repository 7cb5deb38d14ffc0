//! `akrig` command-line front end.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use akrig::{Composition, KernelFamily};

/// Exit statuses.
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_PARTIAL_BENCH: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "akrig", version, about = "Gaussian-process regression with additive kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate hyperparameters and fit a model on a CSV dataset.
    Fit(FitArgs),
    /// Predict mean and variance at query points.
    Predict(PredictArgs),
    /// Tabulate the univariate effects of one direction.
    Effects(EffectsArgs),
    /// Run a benchmark study.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelArg {
    Gaussian,
    Matern32,
}

impl From<KernelArg> for KernelFamily {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Gaussian => KernelFamily::Gaussian,
            KernelArg::Matern32 => KernelFamily::Matern32,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositionArg {
    Additive,
    Tensor,
}

impl From<CompositionArg> for Composition {
    fn from(c: CompositionArg) -> Self {
        match c {
            CompositionArg::Additive => Composition::Additive,
            CompositionArg::Tensor => Composition::TensorProduct,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Rlm,
    Ulm,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Dataset with header x1,...,xd,y.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum)]
    kernel: Option<KernelArg>,
    #[arg(long, value_enum)]
    composition: Option<CompositionArg>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// RLM cycles over the directions.
    #[arg(long)]
    iterations: Option<usize>,
    /// ULM random restarts (the first one starts at the box midpoint).
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fit even when the design is degenerate for the chosen kernel.
    #[arg(long)]
    allow_degenerate: bool,
    /// JSON file with any of the fit settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Query points with header x1,...,xd (a trailing y column is ignored).
    #[arg(long)]
    points: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EffectsArgs {
    #[arg(long)]
    model: PathBuf,
    /// 1-based input direction.
    #[arg(long)]
    direction: usize,
    /// Number of equally spaced points on [0, 1].
    #[arg(long, default_value_t = 101)]
    grid_size: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Gfunction,
    Paths,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(value_enum)]
    experiment: Experiment,
    /// JSON study configuration; omitted fields keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every available core.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Fit(args) => commands::fit(args),
        Command::Predict(args) => commands::predict(args),
        Command::Effects(args) => commands::effects(args),
        Command::Bench(args) => commands::bench(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
