//! `qdyne` command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod units;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use qdyne::Execution;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "qdyne",
    version,
    about = "Fisher information, simulation and estimation for Qdyne nano-NMR"
)]
pub struct Cli {
    /// JSON file with the command's parameters; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output file (directory for `pipeline`); stdout when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Run single-threaded.
    #[arg(long, global = true)]
    pub sequential: bool,
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Tabulate a correlation envelope C(z) as CSV `z,C`.
    Envelope(commands::envelope::Args),
    /// Total Fisher information of CS and Qdyne and their ratio.
    Fisher(commands::fisher::Args),
    /// Information ratio and resolvability over a two-axis grid (CSV).
    RatioMap(commands::ratio_map::Args),
    /// Optimal acquisition time or readout window.
    Optimize(commands::optimize::Args),
    /// Undersampling step, Larmor drift and sample-rate compensation.
    Undersample(commands::undersample::Args),
    /// Simulate Qdyne photon traces or a CS waiting-time sweep.
    Simulate(commands::simulate::Args),
    /// Fit trace autocorrelations and summarize the frequency estimates.
    Estimate(commands::estimate::Cmd),
    /// Simulate, slice, fit and compare the rmse with the Cramér–Rao bound.
    Pipeline(commands::pipeline::Cmd),
    /// Bin photon time tags into a trace file.
    Ingest(commands::ingest::Cmd),
}

/// Where a command's output goes.
pub struct Context {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub exec: Execution,
}

impl Context {
    pub fn config(&self) -> Option<&Path> {
        self.config.as_deref()
    }

    /// Write `text` to `--out`, or stdout.
    pub fn emit(&self, text: &str) -> CliResult<()> {
        match &self.out {
            Some(p) => write_file(p, text),
            None => {
                use std::io::Write;
                let mut stdout = std::io::stdout().lock();
                stdout
                    .write_all(text.as_bytes())
                    .and_then(|_| stdout.flush())
                    .map_err(|e| CliError::io("<stdout>", e))
            }
        }
    }

    pub fn emit_json(&self, value: &serde_json::Value) -> CliResult<()> {
        self.emit(&json_text(value))
    }

    pub fn out_dir(&self, command: &str) -> CliResult<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage(format!("{command} needs --out <DIR>")))
    }
}

pub fn json_text(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values serialize");
    s.push('\n');
    s
}

pub fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_file(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn run(cli: Cli) -> CliResult<()> {
    let ctx = Context {
        config: cli.config,
        out: cli.out,
        exec: if cli.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
    };
    match cli.command {
        Command::Envelope(a) => commands::envelope::run(&ctx, &a),
        Command::Fisher(a) => commands::fisher::run(&ctx, &a),
        Command::RatioMap(a) => commands::ratio_map::run(&ctx, &a),
        Command::Optimize(a) => commands::optimize::run(&ctx, &a),
        Command::Undersample(a) => commands::undersample::run(&ctx, &a),
        Command::Simulate(a) => commands::simulate::run(&ctx, &a),
        Command::Estimate(a) => commands::estimate::run(&ctx, &a),
        Command::Pipeline(a) => commands::pipeline::run(&ctx, &a),
        Command::Ingest(a) => commands::ingest::run(&ctx, &a),
    }
}
