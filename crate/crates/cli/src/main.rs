//! `shardsim` — scenario runner for the sharded-ledger simulator.
//!
//! Three commands:
//!
//! - `run <scenario.json>` executes one scenario and writes `metrics.csv`,
//!   `events.log`, `chain.dump` and `summary.txt` into the output directory;
//! - `validate <scenario.json>` checks the file and the scenario invariants
//!   without running anything;
//! - `sweep <scenario.json> --parameter <key> --values <list>` runs the
//!   scenario once per value, one artifact sub-directory per run, plus a
//!   combined `sweep.csv`.
//!
//! Exit codes: 0 success, 1 scenario problems (malformed file, failed
//! validation, bad override), 2 I/O failures. The output directory defaults
//! to `$SHARDSIM_OUT`, then `./out`.

mod output;
mod scenario_file;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use shardsim_core::rational::display_decimal;
use shardsim_core::sim::{run, validate_scenario, RunOptions, RunOutput, Scenario};

use output::{metrics_csv, summary_text, sweep_csv, write_atomic, SweepRow};
use scenario_file::{
    apply_parameter, parse_scenario_file, parse_sweep_values, split_override, ScenarioFile,
};

#[derive(Parser)]
#[command(
    name = "shardsim",
    version,
    about = "Deterministic simulator for a sharded transaction-verification ledger"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and export its artifacts.
    Run {
        /// Scenario file (JSON).
        scenario: PathBuf,
        /// Output directory [default: $SHARDSIM_OUT, then ./out].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overwrite one scenario parameter (repeatable), e.g. --override seed=42.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Shorthand for --override seed=N, applied before other overrides.
        #[arg(long)]
        seed: Option<u64>,
        /// Evaluate clusters on a thread pool (output is byte-identical).
        #[arg(long)]
        parallel: bool,
    },
    /// Check a scenario file without running it.
    Validate {
        /// Scenario file (JSON).
        scenario: PathBuf,
    },
    /// Run a scenario once per value of one parameter.
    Sweep {
        /// Scenario file (JSON).
        scenario: PathBuf,
        /// Parameter to vary; same keys as --override.
        #[arg(long)]
        parameter: String,
        /// Inclusive integer range like 0..5, or a comma list like 0.5,0.7,0.9.
        #[arg(long)]
        values: String,
        /// Output directory [default: $SHARDSIM_OUT, then ./out].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base overrides applied before the swept parameter (repeatable).
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Shorthand for --override seed=N, applied before other overrides.
        #[arg(long)]
        seed: Option<u64>,
        /// Evaluate clusters on a thread pool (output is byte-identical).
        #[arg(long)]
        parallel: bool,
    },
}

#[derive(Debug, Error)]
enum CliError {
    /// Scenario-level problems: malformed file, failed validation, bad
    /// parameter. Exit code 1.
    #[error("{0}")]
    Invalid(String),
    /// Filesystem problems. Exit code 2.
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            overrides,
            seed,
            parallel,
        } => cmd_run(&scenario, &resolve_out(out), &overrides, seed, parallel),
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Sweep {
            scenario,
            parameter,
            values,
            out,
            overrides,
            seed,
            parallel,
        } => cmd_sweep(
            &scenario,
            &parameter,
            &values,
            &resolve_out(out),
            &overrides,
            seed,
            parallel,
        ),
    }
}

fn resolve_out(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("SHARDSIM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn read_scenario_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

/// Loads a scenario file and applies `--seed` and `--override` arguments.
fn load_file(
    path: &Path,
    seed: Option<u64>,
    overrides: &[String],
) -> Result<ScenarioFile, CliError> {
    let text = read_scenario_text(path)?;
    let mut file = parse_scenario_file(&text)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    if let Some(seed) = seed {
        file.seed = seed;
    }
    for arg in overrides {
        let (key, value) = split_override(arg).map_err(CliError::Invalid)?;
        apply_parameter(&mut file, key, value).map_err(CliError::Invalid)?;
    }
    Ok(file)
}

/// Lowers a file to a runnable scenario, surfacing every violation.
fn prepare(file: &ScenarioFile) -> Result<Scenario, CliError> {
    let scenario = file.to_scenario();
    let violations = validate_scenario(&scenario);
    if violations.is_empty() {
        Ok(scenario)
    } else {
        let mut msg = String::from("scenario validation failed:");
        for violation in &violations {
            msg.push_str("\n  - ");
            msg.push_str(&violation.to_string());
        }
        Err(CliError::Invalid(msg))
    }
}

fn execute(scenario: &Scenario, parallel: bool) -> Result<RunOutput, CliError> {
    run(scenario, &RunOptions { parallel }).map_err(|e| CliError::Invalid(e.to_string()))
}

/// Writes the four per-run artifacts into `dir`.
fn write_run_artifacts(dir: &Path, seed: u64, out: &RunOutput) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let write = |name: &str, bytes: &[u8]| {
        write_atomic(&dir.join(name), bytes)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", dir.join(name).display())))
    };
    write("events.log", out.log.to_ndjson().as_bytes())?;
    write("metrics.csv", metrics_csv(&out.metrics).as_bytes())?;
    write("chain.dump", &out.chain.to_bytes())?;
    write("summary.txt", summary_text(seed, out).as_bytes())?;
    Ok(())
}

fn cmd_run(
    path: &Path,
    out_dir: &Path,
    overrides: &[String],
    seed: Option<u64>,
    parallel: bool,
) -> Result<(), CliError> {
    let file = load_file(path, seed, overrides)?;
    let scenario = prepare(&file)?;
    let out = execute(&scenario, parallel)?;
    write_run_artifacts(out_dir, scenario.seed, &out)?;
    println!(
        "run complete: {} ticks, {} txs decided (accuracy {}), {} claims decided (accuracy {})",
        out.metrics.ticks,
        out.metrics.txs_decided,
        display_decimal(&out.metrics.tx_accuracy(), 4),
        out.metrics.claims_decided,
        display_decimal(&out.metrics.claim_accuracy(), 4),
    );
    println!("artifacts written to {}", out_dir.display());
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<(), CliError> {
    let text = read_scenario_text(path)?;
    let file = parse_scenario_file(&text)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    prepare(&file)?;
    println!("{}: scenario valid", path.display());
    Ok(())
}

fn cmd_sweep(
    path: &Path,
    parameter: &str,
    values: &str,
    out_dir: &Path,
    overrides: &[String],
    seed: Option<u64>,
    parallel: bool,
) -> Result<(), CliError> {
    let base = load_file(path, seed, overrides)?;
    let values = parse_sweep_values(values).map_err(CliError::Invalid)?;

    let mut rows = Vec::new();
    for value in &values {
        let mut file = base.clone();
        apply_parameter(&mut file, parameter, value).map_err(CliError::Invalid)?;
        let scenario =
            prepare(&file).map_err(|e| prefix_invalid(e, &format!("{parameter}={value}: ")))?;
        let out = execute(&scenario, parallel)
            .map_err(|e| prefix_invalid(e, &format!("{parameter}={value}: ")))?;
        let sub_dir = out_dir.join(format!("{parameter}={}", value.replace('/', "-")));
        write_run_artifacts(&sub_dir, scenario.seed, &out)?;
        println!(
            "{parameter}={value}: tx accuracy {}, claim accuracy {}",
            display_decimal(&out.metrics.tx_accuracy(), 4),
            display_decimal(&out.metrics.claim_accuracy(), 4),
        );
        rows.push(SweepRow::from_metrics(value, &out.metrics));
    }

    let sweep_path = out_dir.join("sweep.csv");
    write_atomic(&sweep_path, sweep_csv(&rows).as_bytes())
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", sweep_path.display())))?;
    println!(
        "swept {parameter} over {} values; table in {}",
        rows.len(),
        sweep_path.display()
    );
    Ok(())
}

fn prefix_invalid(err: CliError, prefix: &str) -> CliError {
    match err {
        CliError::Invalid(msg) => CliError::Invalid(format!("{prefix}{msg}")),
        other => other,
    }
}
