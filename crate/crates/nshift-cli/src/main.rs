//! `nshift`: run trajectory, normal-shift and residual experiments from a JSON config.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "nshift", version, about = "Newtonian dynamics and normal shift experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: GlobalOpts,
}

#[derive(clap::Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for probes and random curves; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Compare a simulated trajectory with its closed form.
    #[arg(long, global = true)]
    check_oracle: bool,
    /// Also write whitespace-separated .dat files for gnuplot.
    #[arg(long, global = true)]
    emit_plotdata: bool,
    /// Print the result summary as JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one trajectory.
    Simulate,
    /// Build a shift of a curve and report whether it is normal.
    Shift,
    /// Sweep the normality residuals over random probes.
    Check,
    /// List the named force fields.
    Catalogue,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<normal_shift::Error> for CliError {
    fn from(e: normal_shift::Error) -> Self {
        use normal_shift::Error as E;
        match e {
            E::UnknownCatalogueEntry(_) | E::InvalidParams(_) => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("io: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate => commands::simulate(&cli.opts),
        Command::Shift => commands::shift(&cli.opts),
        Command::Check => commands::check(&cli.opts),
        Command::Catalogue => commands::catalogue(&cli.opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nshift: {e}");
            ExitCode::from(e.code())
        }
    }
}
