//! Experiment runner behind the `multipac` binary.
//!
//! Every subcommand takes a mandatory `--seed`, writes its tables as CSV and
//! a `run_record.toml` into `--out`, and exits with a documented status:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | invalid configuration or output failure |
//! | 2 | instance could not be loaded or generated |
//! | 3 | infeasible instance or learner out of budget |
//! | 4 | a reproduced value does not match its reference |

mod artifacts;
mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::instances::InstanceError;

pub use artifacts::ArtifactWriter;
pub use commands::run;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INSTANCE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_ANCHOR_MISMATCH: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("instance error: {0}")]
    Instance(#[from] InstanceError),
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Instance(_) => EXIT_INSTANCE,
            _ => EXIT_CONFIG,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "multipac", version, about = "Multi-group agnostic PAC learning experiments")]
pub struct ExperimentConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a multi-group predictor and check its per-group slack.
    Learn(LearnArgs),
    /// Audit a predictor for outcome indistinguishability.
    Audit(AuditArgs),
    /// Exhaustive feasibility search over grid predictors.
    Oracle(OracleArgs),
    /// Write a generated instance file.
    Gen(GenArgs),
    /// Sweep the uniform-convergence estimator over sample sizes.
    #[command(name = "uc-test")]
    UcTest(UcArgs),
    /// Rebuild both counterexamples and compare against reference values.
    Counterexample(CounterexampleArgs),
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Root seed; every random draw derives from it.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = "multipac-out")]
    pub out: PathBuf,
    /// Omit the timestamp line from CSV files and the clock fields from the
    /// run record.
    #[arg(long)]
    pub no_header_timestamp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    /// Uniform points with one negative example, false positive rate.
    FprUc,
    /// Three points, individual fairness plus accuracy.
    IfAccuracy,
    /// Seeded random instance.
    Random,
}

#[derive(Debug, Args, Clone)]
pub struct SourceArgs {
    #[arg(long, conflicts_with = "gen")]
    pub instance: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub gen: Option<GenKind>,
    /// Domain size for generated instances.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// Fairness weight of the combined loss.
    #[arg(long, default_value_t = 0.9)]
    pub a: f64,
    /// Accuracy weight of the combined loss.
    #[arg(long, default_value_t = 0.1)]
    pub b: f64,
    #[arg(long, default_value_t = 4)]
    pub groups: usize,
    #[arg(long, default_value_t = 8)]
    pub hypotheses: usize,
    /// Loss of random instances: squared, zero_one, calibration, if_zero_one
    /// or error_rates.
    #[arg(long, default_value = "squared")]
    pub loss: String,
    /// Bucket width of the calibration loss.
    #[arg(long, default_value_t = crate::losses::DEFAULT_CALIBRATION_WIDTH)]
    pub lambda: f64,
    /// Minimum group mass for random instances.
    #[arg(long, default_value_t = 0.25)]
    pub min_group_mass: f64,
    /// Add the Bayes conditional to random hypothesis classes.
    #[arg(long)]
    pub include_bayes: bool,
}

#[derive(Debug, Args, Clone)]
pub struct LearnArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value_t = 0.2)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.2)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.25)]
    pub gamma: f64,
    /// Resolution of the derived transform for losses without a closed form.
    #[arg(long, default_value_t = 0.01)]
    pub grid: f64,
}

#[derive(Debug, Args, Clone)]
pub struct AuditArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value_t = 0.2)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.2)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.25)]
    pub gamma: f64,
    /// Audit accuracy; defaults to the schedule's value.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Audit failure probability.
    #[arg(long, default_value_t = 0.05)]
    pub audit_delta: f64,
    /// `bayes`, `const:<v>` or the name of a hypothesis in the instance.
    #[arg(long, default_value = "bayes")]
    pub predictor: String,
    #[arg(long, default_value_t = 0.01)]
    pub grid: f64,
}

#[derive(Debug, Args, Clone)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.1)]
    pub grid: f64,
    /// Search `{0, 1}`-valued predictors only.
    #[arg(long)]
    pub binary: bool,
}

#[derive(Debug, Args, Clone)]
pub struct GenArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub source: SourceArgs,
}

#[derive(Debug, Args, Clone)]
pub struct UcArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
    pub m_values: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    /// Deviation threshold reported as a fraction of repetitions.
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
}

#[derive(Debug, Args, Clone)]
pub struct CounterexampleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Domain size of the false-positive-rate construction.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.9)]
    pub a: f64,
    #[arg(long, default_value_t = 0.1)]
    pub b: f64,
    /// Sample size for the miss-probability check.
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
}

/// What a finished run reports back to the caller.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub artifacts: Vec<PathBuf>,
    pub summary: Vec<String>,
}

/// Parse `args`, run, print the summary and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match ExperimentConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&config) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
