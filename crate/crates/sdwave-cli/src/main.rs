// SPDX-License-Identifier: Apache-2.0

//! `sdwave`: runs the verification suites of `sdwave-core` from a
//! configuration file and writes CSV tables plus pass/fail summaries.
//!
//! Exit status is 0 when every check passes, 1 when a check fails and 2
//! when the configuration or the output directory is unusable.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sdwave_core::{Suite, SuiteReport};

use crate::config::{ExperimentConfig, Preset};

#[derive(Debug, Parser)]
#[command(name = "sdwave", version, about = "Boundary LQR verification suites for the strongly damped wave equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Resolvent tables against the closed form and the Neumann series.
    Kernels(RunArgs),
    /// Two forward solvers and the damped wave cross-check.
    Forward(RunArgs),
    /// Optimal control, value and optimality residual.
    Optimize(RunArgs),
    /// Restart consistency of the optimal solution.
    Bellman(RunArgs),
    /// Dissipation inequality along optimal and non-optimal controls.
    Dissipation(RunArgs),
    /// Riccati residual, chain-rule closure and terminal condition.
    Riccati(RunArgs),
    /// Closed-loop feedback against the open-loop optimum.
    ClosedLoop(RunArgs),
    /// Every suite in sequence.
    All(RunArgs),
    /// Prints a built-in configuration as a starting point.
    Config {
        /// Preset to print.
        #[arg(long, value_enum, default_value = "smooth")]
        preset: Preset,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Configuration file.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration used when no file is given.
    #[arg(long, value_enum, default_value = "smooth")]
    preset: Preset,
    /// Output directory; overrides `output_dir` from the configuration.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed of all random draws; overrides the configuration.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Factor applied to every absolute threshold; overrides the configuration.
    #[arg(long, value_name = "X")]
    tol_scale: Option<f64>,
}

const DEFAULT_OUT: &str = "sdwave-out";

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (suites, args): (Vec<Suite>, RunArgs) = match cli.command {
        Command::Config { preset } => {
            print!("{}", preset.text());
            return ExitCode::SUCCESS;
        }
        Command::Kernels(a) => (vec![Suite::Kernels], a),
        Command::Forward(a) => (vec![Suite::Forward], a),
        Command::Optimize(a) => (vec![Suite::Optimize], a),
        Command::Bellman(a) => (vec![Suite::Bellman], a),
        Command::Dissipation(a) => (vec![Suite::Dissipation], a),
        Command::Riccati(a) => (vec![Suite::Riccati], a),
        Command::ClosedLoop(a) => (vec![Suite::ClosedLoop], a),
        Command::All(a) => (Suite::ALL.to_vec(), a),
    };
    match run(&suites, &args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Runs the suites and writes their artifacts; returns whether every check
/// passed. Nothing is written unless the configuration is valid.
fn run(suites: &[Suite], args: &RunArgs) -> Result<bool> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset(args.preset)?,
    };
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    if args.tol_scale.is_some() {
        cfg.tol_scale = args.tol_scale;
    }
    let suite_config = cfg.to_suite_config()?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;

    let run_info = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "scenario": cfg.scenario,
        "seed": suite_config.seed,
        "tol_scale": suite_config.tol_scale,
        "config": cfg,
    });
    eprintln!(
        "scenario `{}`: {} modes, T = {}, {} steps, seed {}",
        cfg.scenario, suite_config.n_modes, suite_config.t_final, suite_config.n_steps, suite_config.seed
    );
    let mut reports: Vec<SuiteReport> = Vec::with_capacity(suites.len());
    for suite in suites {
        let start = Instant::now();
        let report = suite
            .run(&suite_config)
            .with_context(|| format!("suite `{}` failed to run", suite.name()))?;
        output::write_suite(&out, &report, &run_info)?;
        for c in &report.checks {
            println!("{}", output::summary_line(c));
        }
        eprintln!(
            "{}: {} in {:.2?}",
            suite.name(),
            if report.passed() { "PASS" } else { "FAIL" },
            start.elapsed()
        );
        reports.push(report);
    }
    output::write_run_summary(&out, &reports, &run_info)?;
    let passed = reports.iter().all(SuiteReport::passed);
    eprintln!("artifacts written to {}", out.display());
    Ok(passed)
}
