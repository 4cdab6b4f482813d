//! The `tempus` command line: synthetic data generation, hyperparameter
//! fitting, interval estimation, training runs and estimation sweeps.
//!
//! Exit codes: 0 success, 2 input error, 3 fit did not converge (results are
//! still written), 4 numerical abort.

pub mod commands;
pub mod config;
pub mod format;
pub mod sensor_csv;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "tempus", version, about = "Interval estimation from OU sensor streams and TD learning on a timing task")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic OU sensor data as CSV.
    Gen(GenArgs),
    /// Fit OU hyperparameters to a sensor CSV.
    Fit(FitArgs),
    /// Estimate the interval spanned by a sensor CSV.
    Estimate(EstimateArgs),
    /// Train the agent and write episode logs and analysis tables.
    Train(TrainArgs),
    /// Measure interval-estimation accuracy over durations and seeds.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0.65)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.45)]
    pub sigma: f64,
    /// Seconds of data; the file holds round(duration / dt) rows.
    #[arg(long, default_value_t = 20.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 15)]
    pub channels: usize,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Run config; only the `fit.*` keys are used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output JSON path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// JSON with `lambda` and `sigma`, e.g. the output of `fit`.
    #[arg(long)]
    pub params: PathBuf,
    /// `start:stop:step` or a comma-separated list of candidates, in seconds.
    #[arg(long, default_value = "0.5:30:0.5")]
    pub grid: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RepresentationArg {
    Microstimuli,
    Csc,
    Tabular,
    TabularHistory,
}

impl RepresentationArg {
    pub fn name(self) -> &'static str {
        match self {
            RepresentationArg::Microstimuli => "microstimuli",
            RepresentationArg::Csc => "csc",
            RepresentationArg::Tabular => "tabular",
            RepresentationArg::TabularHistory => "tabular-history",
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Feed the true interval to the agent instead of the estimate.
    #[arg(long)]
    pub oracle_tau: bool,
    #[arg(long, value_enum)]
    pub representation: Option<RepresentationArg>,
    /// Horizon of the csc and tabular-history representations.
    #[arg(long)]
    pub horizon: Option<u32>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 0.65)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.45)]
    pub sigma: f64,
    /// Comma-separated true intervals in seconds.
    #[arg(long, default_value = "5,10,15,20")]
    pub taus: String,
    /// Number of seeds per interval.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    /// First seed; seeds run from here upwards.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    #[arg(long, default_value_t = 15)]
    pub channels: usize,
    #[arg(long, default_value = "0.5:30:0.5")]
    pub grid: String,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerical { .. } | Error::Conditioning { .. } | Error::Episode { .. } => EXIT_NUMERICAL,
        _ => EXIT_INPUT,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Gen(a) => commands::cmd_gen(a),
        Command::Fit(a) => commands::cmd_fit(a),
        Command::Estimate(a) => commands::cmd_estimate(a),
        Command::Train(a) => commands::cmd_train(a),
        Command::Sweep(a) => commands::cmd_sweep(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
