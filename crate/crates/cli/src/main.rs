//! `retail-impulse`: solve, verify and simulate optimal price-adjustment
//! bands from a JSON config or a built-in preset.
//!
//! Exit status: 0 success, 2 config or validation error, 3 solver failure,
//! 4 a verified condition does not hold.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "retail-impulse", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON config document.
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in parameter set: problem1, problem2, problem3 or problem4.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output file, written atomically; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `simulate.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// QVI tolerance for `qvi-check`.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the optimal band; the extended solver is used when mu or
    /// lambda is non-zero.
    Solve,
    /// V, phi and region on a grid, as CSV.
    ValueCurve,
    /// Thresholds, A, V(x_v) and dV/dc(x_v) over a list of costs, as CSV.
    SweepCost,
    /// Monte Carlo estimate of the payoff of a band policy.
    Simulate,
    /// Pointwise QVI residuals as CSV; a JSON summary goes to stderr.
    QviCheck,
    /// `solve` with the five-equation solver regardless of mu and lambda.
    ExtendedSolve,
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    match (&common.config, &common.preset) {
        (Some(path), None) => RunConfig::load(path),
        (None, Some(name)) => RunConfig::preset(name),
        (None, None) => Err(CliError::Config(
            "one of --config or --preset is required".into(),
        )),
        (Some(_), Some(_)) => Err(CliError::Config(
            "--config and --preset are exclusive".into(),
        )),
    }
}

fn run(cli: &Cli) -> Result<ExitCode, CliError> {
    let cfg = load(&cli.common)?;
    let out = cli.common.out.as_deref();
    let bytes = match cli.command {
        Command::Solve => commands::solve(&cfg, false)?,
        Command::ExtendedSolve => commands::solve(&cfg, true)?,
        Command::ValueCurve => commands::value_curve(&cfg)?,
        Command::SweepCost => commands::sweep_cost(&cfg)?,
        Command::Simulate => commands::run_simulation(&cfg, cli.common.seed)?,
        Command::QviCheck => {
            let outcome = commands::qvi_check(&cfg, cli.common.tol)?;
            output::emit(out, &outcome.table)?;
            eprintln!("{}", outcome.summary);
            return Ok(if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(4)
            });
        }
    };
    output::emit(out, &bytes)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": { "category": e.category(), "message": e.to_string() } })
            );
            ExitCode::from(e.exit_code())
        }
    }
}
