//! `bridgevol`: data files for bridge OHLC volatility estimators.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error, 3 input
//! error, 4 numerical non-convergence.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod fail;
mod input;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{Estimator, Overrides, RunConfig, Section, TickCount};
use crate::fail::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "bridgevol",
    version,
    about = "Most-efficient OHLC bridge volatility estimators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analytic variances of the me, gk and park estimators over a kappa grid.
    VarianceCurve,
    /// Analytic means of the classic gk and park forms over a kappa grid.
    BiasCurve,
    /// Estimates of several estimators on the same simulated walks.
    SamplePanel,
    /// Per-interval estimates from a tick file or (kappa = 0) an OHLC file.
    Estimate,
    /// Finite-tick benchmark of G&K against synthetic most-efficient diagrams.
    Table1,
    /// Write a diagram and a plotting table of its values.
    DiagramDump,
    /// Simulate a tick file of a log-normal price.
    Simulate,
}

#[derive(Debug, Args)]
struct Flags {
    /// Estimator order (2 for variance).
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Bridge coefficient; a comma-separated grid for the curve commands.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    kappa: Option<Vec<f64>>,
    /// Normalized drift (design drift for most-efficient diagrams).
    #[arg(long, global = true, allow_negative_numbers = true)]
    gamma: Option<f64>,
    /// Ticks per interval (integer or "inf"); a list for table1.
    #[arg(long = "K", global = true, value_delimiter = ',')]
    ticks: Option<Vec<TickCount>>,
    /// Walks per synthetic diagram (table1).
    #[arg(long = "M", global = true)]
    m: Option<usize>,
    /// Sample count: panel size, evaluation walks or simulated intervals.
    #[arg(long = "N", global = true)]
    n: Option<usize>,
    /// Resolution of tabulated diagrams.
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config file, or a JSON sidecar of an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = automatic); results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Estimator(s): me, gk, park.
    #[arg(long, global = true, value_delimiter = ',')]
    estimator: Option<Vec<Estimator>>,
    /// Input file for estimate.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            lambda: self.lambda,
            kappa: self.kappa.clone(),
            gamma: self.gamma,
            ticks: self.ticks.clone(),
            m: self.m,
            n: self.n,
            grid: self.grid,
            seed: self.seed,
            out: self.out.clone(),
            threads: self.threads,
            estimator: self.estimator.clone(),
            input: self.input.clone(),
        }
    }
}

fn run(cli: &Cli) -> Result<PathBuf, Failure> {
    let section = match cli.command {
        Command::VarianceCurve => Section::VarianceCurve,
        Command::BiasCurve => Section::BiasCurve,
        Command::SamplePanel => Section::SamplePanel,
        Command::Estimate => Section::Estimate,
        Command::Table1 => Section::Table1,
        Command::DiagramDump => Section::DiagramDump,
        Command::Simulate => Section::Simulate,
    };
    let cfg = RunConfig::resolve(cli.flags.config.as_deref(), &cli.flags.overrides(), section)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(Failure::other)?;
    }
    match cli.command {
        Command::VarianceCurve => commands::variance_curve(&cfg),
        Command::BiasCurve => commands::bias_curve(&cfg),
        Command::SamplePanel => commands::sample_panel(&cfg),
        Command::Estimate => commands::estimate(&cfg),
        Command::Table1 => commands::table1(&cfg),
        Command::DiagramDump => commands::diagram_dump(&cfg),
        Command::Simulate => commands::simulate(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(sidecar) => {
            println!("{}", sidecar.display());
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
