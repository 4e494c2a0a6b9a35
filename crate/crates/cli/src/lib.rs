//! Command-line front end for the `cavity_gate` simulator.
//!
//! `cavity-gate <scenario> [--config FILE] [--key value ...]` runs a scenario,
//! writes `<output>.csv` and `<output>.jsonl` and prints a summary.

pub mod config;
pub mod output;
mod scenarios;

use std::io::Write;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use config::{load, parse_overrides, template, ModelKind, Preset, RunConfig, Scenario};
pub use output::{BudgetRow, GateRow, GhzRow, ValidationRow};
pub use scenarios::run_scenario;

/// Environment variable holding the worker-thread count for sweeps.
pub const THREADS_ENV: &str = "CAVITY_GATE_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
    #[error(transparent)]
    Core(#[from] cavity_gate::Error),
    #[error("invariant check failed: {0}")]
    Invariant(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for configuration problems, 3 for failed invariants or truncation,
    /// 4 for integrator non-convergence.
    pub fn exit_code(&self) -> i32 {
        use cavity_gate::Error as E;
        match self {
            Self::Config(_) | Self::UnknownScenario(_) => 2,
            Self::Core(E::NonConvergence(_)) => 4,
            Self::Core(E::InvalidArgument(_) | E::InvalidSpec(_)) => 2,
            Self::Core(_) | Self::Invariant(_) => 3,
            Self::Io(_) | Self::Csv(_) | Self::Json(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cavity-gate", version, about = "Thermal-cavity phase gate and GHZ simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List the available scenarios.
    ListScenarios,
    /// Print a commented config template with the scenario defaults.
    Template { scenario: String },
    /// Run a scenario: `<scenario> [--config FILE] [--key value ...]`.
    #[command(external_subcommand)]
    Run(Vec<String>),
}

pub fn scenario_list() -> String {
    Scenario::ALL.iter().map(|s| format!("  {:<20} {}\n", s.name(), s.describe())).collect()
}

/// Runs the command line `args` (without the program name), printing to `out`.
pub fn run<W: Write>(args: &[String], out: &mut W) -> Result<(), CliError> {
    let argv = std::iter::once("cavity-gate".to_string()).chain(args.iter().cloned());
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            write!(out, "{e}")?;
            return Ok(());
        }
        Err(e) => return Err(CliError::Config(format!("{e}\nscenarios:\n{}", scenario_list()))),
    };
    match cli.command {
        Command::ListScenarios => {
            write!(out, "{}", scenario_list())?;
            Ok(())
        }
        Command::Template { scenario } => {
            write!(out, "{}", template(scenario.parse()?))?;
            Ok(())
        }
        Command::Run(rest) => {
            let (name, flags) = rest.split_first().expect("external subcommand has a name");
            let scenario: Scenario = name.parse()?;
            let (file, flags) = take_config_flag(flags)?;
            let text = match &file {
                Some(p) => Some(std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {p}: {e}")))?),
                None => None,
            };
            let cfg = load(scenario, text.as_deref(), &parse_overrides(&flags)?)?;
            init_threads()?;
            run_scenario(&cfg, out)
        }
    }
}

/// Splits `--config FILE` off the override flags.
fn take_config_flag(flags: &[String]) -> Result<(Option<String>, Vec<String>), CliError> {
    let mut file = None;
    let mut rest = Vec::new();
    let mut it = flags.iter();
    while let Some(f) = it.next() {
        if f == "--config" {
            let p = it.next().ok_or_else(|| CliError::Config("--config needs a file".into()))?;
            file = Some(p.clone());
        } else if let Some(p) = f.strip_prefix("--config=") {
            file = Some(p.to_string());
        } else {
            rest.push(f.clone());
        }
    }
    Ok((file, rest))
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
    // a pool already built by an earlier call in this process is kept
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Entry point for the binary: runs `args` and returns the process exit code.
pub fn main_with(args: &[String]) -> i32 {
    let stdout = std::io::stdout();
    match run(args, &mut stdout.lock()) {
        Ok(()) => 0,
        // output piped into a pager or `head` that closed early
        Err(CliError::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::UnknownScenario(_)) {
                eprintln!("valid scenarios:\n{}", scenario_list());
            }
            e.exit_code()
        }
    }
}
