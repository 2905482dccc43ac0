//! Command-line surface of the fixed rank nomination model: survey file
//! ingestion, simulation, fitting, summaries and likelihood comparisons.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
pub use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "frn",
    version,
    about = "Social relations regression for fixed rank nomination surveys"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate survey datasets from a preset scenario
    Simulate(ConfigArgs),
    /// Fit one dataset under one or more likelihoods
    Fit(ConfigArgs),
    /// Recompute the summary of a posterior sample
    Summarize(ConfigArgs),
    /// Compare fits of several likelihoods across scenarios
    Compare(ConfigArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Configuration file of `key = value` lines
    #[arg(short, long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override or add a configuration key
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        cfg.apply_overrides(&self.set)?;
        Ok(cfg)
    }
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Simulate(a) => commands::simulate(&a.load()?),
        Command::Fit(a) => commands::fit(&a.load()?),
        Command::Summarize(a) => commands::summarize(&a.load()?),
        Command::Compare(a) => commands::compare(&a.load()?),
    }
}

/// Runs the CLI on `args` (program name first) and returns the exit status:
/// 0 success, 1 usage, 2 data validation, 3 numerical failure.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
