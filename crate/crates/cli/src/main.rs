//! Experiment runner: execute single runs or sweeps from a JSON config,
//! run the property-verification suites, or aggregate decomposition
//! diagnostics.
//!
//! Exit codes: 0 success; 1 runtime or verification failure (partial
//! results preserved); 2 configuration/usage errors.

mod config;
mod diag;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use attittud_core::verify;
use config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "attittud",
    about = "Primary-task-aware auxiliary gradient decomposition: experiments, verification, diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the runs described by a JSON experiment config.
    Run {
        /// Path to the experiment config (see schema/experiment-config.schema.json).
        config: PathBuf,
    },
    /// Run a property suite: decomposition | theorem1 | sketch | gradients | all.
    Verify { suite: String },
    /// Aggregate decomposition diagnostics under a run directory into CSV.
    Diag { run_dir: PathBuf },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config } => cmd_run(&config),
        Command::Verify { suite } => cmd_verify(&suite),
        Command::Diag { run_dir } => cmd_diag(&run_dir),
    }
}

fn cmd_run(config_path: &PathBuf) -> ExitCode {
    let config = match ExperimentConfig::from_path(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = config.train.validate() {
        eprintln!("config error: {e}");
        return ExitCode::from(2);
    }
    match runner::execute(&config) {
        Ok(out_root) => {
            println!("wrote results to {}", out_root.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            // Invalid configurations surface from deeper validation too
            // (e.g. jacobian samples exceeding the train split).
            let text = format!("{e:#}");
            if text.contains("invalid config") || text.contains("invalid task spec") {
                eprintln!("config error: {text}");
                ExitCode::from(2)
            } else {
                eprintln!("run failed (partial results preserved): {text}");
                ExitCode::from(1)
            }
        }
    }
}

fn cmd_verify(suite: &str) -> ExitCode {
    let reports = if suite == "all" {
        verify::all_suites()
    } else {
        match verify::suite_by_name(suite) {
            Some(r) => vec![r],
            None => {
                eprintln!(
                    "unknown suite {suite:?}; choose one of {:?} or \"all\"",
                    verify::SUITE_NAMES
                );
                return ExitCode::from(2);
            }
        }
    };
    let mut all_passed = true;
    for report in &reports {
        for check in &report.checks {
            let status = if check.passed { "PASS" } else { "FAIL" };
            println!("{status}  {}/{} — {}", report.suite, check.name, check.detail);
            all_passed &= check.passed;
        }
    }
    if all_passed {
        println!("all checks passed");
        ExitCode::SUCCESS
    } else {
        eprintln!("verification failed");
        ExitCode::from(1)
    }
}

fn cmd_diag(run_dir: &PathBuf) -> ExitCode {
    match diag::summarize(run_dir) {
        Ok(rows) => {
            print!("{}", diag::rows_to_csv(&rows));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("diag failed: {e:#}");
            ExitCode::from(1)
        }
    }
}
