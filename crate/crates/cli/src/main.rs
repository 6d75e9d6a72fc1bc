//! `comdel`: complementary-delivery rates from the command line.

mod commands;
mod problem;
mod selfcheck;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{kind}: {0}", kind = kind(.0))]
    Core(#[from] comdel::Error),
    #[error("input: {0}")]
    Input(String),
    #[error("output: {0}")]
    Output(String),
    #[error("{0} self-check(s) failed")]
    SelfCheck(usize),
}

fn kind(e: &comdel::Error) -> &'static str {
    use comdel::Error::*;
    match e {
        NegativeMass { .. } => "NegativeMass",
        NotNormalized { .. } => "NotNormalized",
        ShapeMismatch(_) => "ShapeMismatch",
        CoordOverlap(_) => "CoordOverlap",
        CoordOutOfRange { .. } => "CoordOutOfRange",
        BudgetNegative(_) => "BudgetNegative",
        InvalidDistortion(_) => "InvalidDistortion",
        Infeasible(_) => "Infeasible",
        NonConvergence { .. } => "NonConvergence",
        TooLarge(_) => "TooLarge",
        LengthMismatch { .. } => "LengthMismatch",
        InvalidParams(_) => "InvalidParams",
    }
}

impl CliError {
    /// 0 ok, 1 self-check failure, 2 bad input, 3 no convergence,
    /// 4 resource limit.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(comdel::Error::NonConvergence { .. }) => 3,
            CliError::Core(comdel::Error::TooLarge(_)) => 4,
            CliError::Core(_) | CliError::Input(_) | CliError::Output(_) => 2,
            CliError::SelfCheck(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "comdel", version, about = "Lossy complementary-delivery rate-distortion toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Seed for the optimizer and simulator (overrides the problem file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of optimizer restarts.
    #[arg(long, global = true)]
    pub restarts: Option<usize>,
    /// Auxiliary alphabet size.
    #[arg(long = "u-size", global = true)]
    pub u_size: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Report rates in bits in tabular output.
    #[arg(long, global = true)]
    pub bits: bool,
    /// Write the optimized channel and decoders to this file.
    #[arg(long = "dump-solution", global = true, value_name = "FILE")]
    pub dump_solution: Option<PathBuf>,
    /// Write the parsed problem back out as JSON (`-` for stdout).
    #[arg(long = "dump-problem", global = true, value_name = "FILE")]
    pub dump_problem: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Complementary-delivery rate at the file's budgets.
    Rate { problem: PathBuf },
    /// Rate over a grid of budgets.
    Curve {
        problem: PathBuf,
        /// Comma-separated D_X values.
        #[arg(long, value_delimiter = ',', required = true)]
        dx: Vec<f64>,
        /// Comma-separated D_Y values; when omitted the grid is diagonal.
        #[arg(long, value_delimiter = ',')]
        dy: Option<Vec<f64>>,
    },
    /// Lossless, conditional and Wyner-Ziv reference rates.
    Baselines { problem: PathBuf },
    /// Monte Carlo run of the random-binning scheme.
    Simulate {
        problem: PathBuf,
        /// Solution file from `--dump-solution`; optimized afresh when omitted.
        #[arg(long)]
        solution: Option<PathBuf>,
        /// Comma-separated block lengths.
        #[arg(long = "block-lengths", value_delimiter = ',')]
        block_lengths: Option<Vec<usize>>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        gamma: Option<f64>,
        /// Writes PREFIX.json and PREFIX.csv instead of printing.
        #[arg(long, value_name = "PREFIX")]
        out: Option<PathBuf>,
    },
    /// N-source generalized rate.
    Gcd { problem: PathBuf },
    /// Runs the invariant suite on built-in instances.
    Selfcheck,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
