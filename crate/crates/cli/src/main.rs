//! `rff`: reproduces the figure datasets as CSV and runs the validation
//! suites.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rff::RffError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] RffError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("validation failed: {0}")]
    Validation(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(RffError::Parameter(_) | RffError::Resolution(_) | RffError::Geometry(_)) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rff", version, about = "Reference-frame-free qubit simulator: figure datasets and validation suites")]
struct Cli {
    /// Flat dotted-key TOML file; missing keys take the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV and report files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides run.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides fig4.trajectories.
    #[arg(long, global = true)]
    trajectories: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Coupling frequencies and decoherence times for the physical trio.
    /// Writes constants.txt.
    Constants,
    /// Rescaled stray-field ensemble against the closed-form decay.
    /// Writes fig4.csv with columns t_over_tau, P_closed, S1_closed,
    /// S3_closed, P, P_err, S1, S1_err, S3, S3_err, P_master, S1_master,
    /// S3_master and, if enabled, S1_no_dd, S1_no_dd_err.
    Fig4,
    /// Fidelity of the imperfect trio. Writes fig5_top.csv, fig5_inset.csv
    /// and fig5_bottom.csv with columns t_periods (Ω1 t/2π), P, F_bound and
    /// one F_s<s0> column per initial signal length.
    Fig5,
    /// Four-atom square. Writes fig7.csv with columns t_periods (Ωt/2π),
    /// F_bound, abs_f2.
    Fig7,
    /// Optical lattice. Writes fig9_grid.csv (x_m, y_m, V_norm),
    /// fig9_cut_ab.csv and fig9_cut_saddle.csv (s_m, V_norm) and
    /// fig9_report.txt.
    Fig9,
    /// Imperfection analysis of the configured trio. Writes
    /// geometry_report.txt.
    GeometryReport,
    /// Runs invariant suites; exit status 1 on any failure.
    Validate {
        #[arg(value_enum, default_value_t = Suite::All)]
        suite: Suite,
        /// Test fixture: corrupt an operator before the algebra suite.
        #[arg(long, hide = true)]
        inject_fault: Option<Fault>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Algebra,
    Noise,
    Oracle,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    Sigma3Sign,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = config::Config::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.set("run.seed", config::Value::Num(s as f64));
    }
    if let Some(n) = cli.trajectories {
        cfg.set("fig4.trajectories", config::Value::Num(n as f64));
    }
    let ctx = commands::Context { cfg, out: cli.out };
    match cli.command {
        Command::Constants => commands::constants(&ctx),
        Command::Fig4 => commands::fig4(&ctx),
        Command::Fig5 => commands::fig5(&ctx),
        Command::Fig7 => commands::fig7(&ctx),
        Command::Fig9 => commands::fig9(&ctx),
        Command::GeometryReport => commands::geometry_report(&ctx),
        Command::Validate { suite, inject_fault } => commands::validate(&ctx, suite, inject_fault),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
