//! Command-line driver: density grid dumps, model fits, goodness-of-fit
//! reports, synthetic samples and cross-model comparison tables.
//!
//! Every run is deterministic: randomness flows from the explicit `--seed`,
//! artifacts carry a version header instead of timestamps, and identical
//! invocations produce byte-identical files.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

mod run;

use run::RunSpec;

#[derive(Parser)]
#[command(name = "vgfit", version, about = "Variance-Gamma return-model calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Avg,
    Svg,
    Clm,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputKind {
    /// CSV of `date,adjusted_close` rows; log returns are derived.
    Prices,
    /// CSV with a single `return` column, already in model units.
    Returns,
}

#[derive(Args, Clone)]
pub struct GridArgs {
    /// Frequency support width of the inversion grid (default: sized
    /// automatically from the parameters).
    #[arg(long)]
    pub a: Option<f64>,
    /// Grid size (power of two; default: sized automatically).
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Args, Clone)]
pub struct DataArgs {
    /// Input CSV path.
    #[arg(long)]
    pub input: PathBuf,
    /// How to interpret the input file.
    #[arg(long, value_enum, default_value = "prices")]
    pub input_kind: InputKind,
    /// Multiplier applied to raw log returns (100 = percent units).
    #[arg(long, default_value_t = 100.0)]
    pub scale: f64,
    /// Outlier rule: `none`, `abs:<threshold>` or `z:<k>`.
    #[arg(long, default_value = "none")]
    pub outlier_rule: String,
    /// Largest fraction of the sample an outlier rule may remove.
    #[arg(long, default_value_t = 0.05)]
    pub max_removal: f64,
}

#[derive(Args, Clone)]
pub struct ParamArgs {
    #[arg(long, default_value_t = 0.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate a VG density (optionally with parameter derivatives) as CSV.
    Density {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Derivative levels to include: 0 density, 1 gradient, 2 Hessian.
        #[arg(long, default_value_t = 0)]
        order: u8,
        /// Keep going when the transform has not decayed at the grid edge
        /// (reproduces truncated plotting grids; results carry that error).
        #[arg(long)]
        allow_truncation: bool,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Fit a model by maximum likelihood and write trace + summary.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "avg")]
        model: Model,
        /// `default`, `moments`, or five comma-separated values
        /// `mu,delta,sigma,alpha,theta`.
        #[arg(long, default_value = "default")]
        init: String,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Fit a model, test it against the sample and write a KS report.
    Ks {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "svg")]
        model: Model,
        #[arg(long, default_value = "default")]
        init: String,
        #[command(flatten)]
        grid: GridArgs,
        /// Also dump the null density of the KS statistic as CSV.
        #[arg(long)]
        null_density: bool,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Draw a synthetic return sample and write it as CSV.
    Simulate {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Merge fit/KS summaries into one comparison table.
    Report {
        /// Summary JSON files produced by `fit` or `ks` (repeatable).
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let spec = match RunSpec::from_command(cli.command) {
        Ok(spec) => spec,
        Err(msg) => {
            eprintln!("error: [usage] {msg}");
            return ExitCode::from(1);
        }
    };
    match run::run(&spec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            use vgfit_core::ErrorCategory::*;
            let (code, label) = match e.category() {
                Usage => (1, "usage"),
                Data => (2, "data"),
                Numerical => (3, "numerical"),
            };
            eprintln!("error: [{label}] {e}");
            ExitCode::from(code)
        }
    }
}
