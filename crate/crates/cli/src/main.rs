//! `muxsbm` — stochastic block models for directed multiplex networks.
//!
//! Exit codes: 0 on success, 2 on input/usage errors, 3 when a result was
//! produced but carries warnings (non-convergence, degenerate blocks,
//! assumption violations).

#![allow(clippy::needless_range_loop)]

mod cfg;
mod commands;
mod formats;
mod json;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "muxsbm",
    version,
    about = "Stochastic block models for directed multiplex networks",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a planted multiplex block model.
    Simulate(commands::simulate::SimulateArgs),
    /// Fit a block model with a fixed block count.
    Fit(commands::fit::FitArgs),
    /// Scan block counts and select by ICL.
    Select(commands::select::SelectArgs),
    /// Fit the Erdős–Rényi baseline.
    ErFit(commands::er_fit::ErFitArgs),
    /// Exact enumeration on small instances.
    Oracle(commands::oracle::OracleArgs),
    /// Consistency experiments.
    Lab(commands::lab::LabArgs),
    /// Block summaries of a fit.
    Summarize(commands::summarize::SummarizeArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Fit(args) => commands::fit::run(args),
        Command::Select(args) => commands::select::run(args),
        Command::ErFit(args) => commands::er_fit::run(args),
        Command::Oracle(args) => commands::oracle::run(args),
        Command::Lab(args) => commands::lab::run(args),
        Command::Summarize(args) => commands::summarize::run(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
