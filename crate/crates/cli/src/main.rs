//! `atesim` command-line front end.
//!
//! Exit status: 0 on success, 1 on a usage error, 2 when the command itself
//! fails.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Seed used when `--seed` is not given. Nothing reads the clock or the
/// environment for randomness.
pub const DEFAULT_SEED: u64 = 20_250_101;

#[derive(Parser, Debug)]
#[command(name = "atesim", version, about = "Simulation and estimation engine for ATE benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a scenario from a tabular dataset and an ingestion config.
    ScenarioBuild {
        /// Ingestion config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Where to write the scenario JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a scenario's true ATE to three decimals.
    ScenarioTruth {
        #[arg(long)]
        scenario: PathBuf,
        /// Also print K, n, and the arm means.
        #[arg(long)]
        verbose: bool,
    },
    /// Draw one dataset from a scenario as CSV.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the ATE on one dataset.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo study.
    StudyRun(StudyArgs),
    /// Re-render a metrics CSV written by `study-run`.
    Report {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve an in-process model over protocol v1.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long)]
    pub strategy: String,
    /// logistic, boosted-trees, saturated, or external.
    #[arg(long)]
    pub model: Option<String>,
    /// Dataset CSV as written by `simulate`.
    #[arg(long)]
    pub data: PathBuf,
    /// Bootstrap iterations; 0 prints the point estimate alone.
    #[arg(long, default_value_t = 599)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Server address for external models or `external-direct`.
    #[arg(long)]
    pub endpoint: Option<String>,
}

#[derive(Args, Debug)]
pub struct StudyArgs {
    /// Study config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Config override as `key=value`, e.g. `bootstrap.iterations=199`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Replaces `base_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Replaces `bootstrap.iterations`.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Replaces `bootstrap.level`.
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Report file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-replicate audit log (JSON lines).
    #[arg(long)]
    pub audit: Option<PathBuf>,
    /// Include mean wall time per estimate in the report.
    #[arg(long)]
    pub timing: bool,
    /// No progress line on standard error.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// `stdio`, or a TCP address such as 127.0.0.1:7070.
    #[arg(long, default_value = "stdio")]
    pub listen: String,
    #[arg(long, default_value = "logistic")]
    pub model: String,
    /// Also answer `estimate_ate` with logistic g-computation and a
    /// percentile bootstrap of this many iterations.
    #[arg(long)]
    pub direct_bootstrap: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Table,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
