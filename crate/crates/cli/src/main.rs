//! `advtrade`: generate data, sweep trade-off curves, compute IFAs and run
//! the linear-regression checks, writing JSON/CSV artifacts.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::config::ConfigError;

#[derive(Parser, Debug)]
#[command(name = "advtrade", version, about = "Clean versus adversarial risk trade-offs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic sparse linear-regression problem.
    Gen(commands::gen::GenArgs),
    /// Sweep the clean/adversarial trade-off curve over a weight grid.
    Curve(commands::curve::CurveArgs),
    /// Fit a model and compute its adversarial influence function.
    Ifa(commands::ifa::IfaArgs),
    /// Adversarial linear regression: LASSO equivalence, error bounds and
    /// divergent interpolators.
    LinregCheck(commands::linreg::LinregArgs),
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Flat `key = value` file; command-line flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(advtrade::Error),
    Io(std::io::Error),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<advtrade::Error> for CliError {
    fn from(e: advtrade::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use advtrade::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                E::Argument(_) | E::Dimension { .. } | E::Domain(_) | E::Parse { .. } => 2,
                E::Optimization { .. } | E::SingularHessian { .. } | E::DegenerateGradient => 3,
                E::Stationarity { .. } => 4,
                E::Precondition(_) | E::ConstructionImpossible(_) | E::Refused(_) => 5,
                E::Io(_) | E::Json(_) | E::Csv(_) => 1,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, result) = match &cli.command {
        Command::Gen(a) => ("gen", commands::gen::run(a)),
        Command::Curve(a) => ("curve", commands::curve::run(a)),
        Command::Ifa(a) => ("ifa", commands::ifa::run(a)),
        Command::LinregCheck(a) => ("linreg-check", commands::linreg::run(a)),
    };
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Config(_) = e {
                let mut cmd = Cli::command();
                if let Some(sub) = cmd.find_subcommand_mut(name) {
                    let mut sub = sub.clone().bin_name(format!("advtrade {name}"));
                    eprintln!("\n{}", sub.render_usage());
                }
            }
            ExitCode::from(e.exit_code())
        }
    }
}
