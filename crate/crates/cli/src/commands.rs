//! Subcommands and their exit codes.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use vifem::experiments::{run_convergence, run_simulation, run_stationary};
use vifem::{registry, PdasReport, RunResult};

use crate::config::{ConfigError, Mode, RunConfig};
use crate::output::{self, Table};
use crate::selftest;

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "vifem", version, about = "Bound-preserving, mass-conservative finite element experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the names of the test cases.
    List,
    /// Errors and convergence rates over a sequence of meshes.
    Converge(RunArgs),
    /// One trajectory with per-step diagnostics.
    Simulate(RunArgs),
    /// One stationary solve.
    Stationary(RunArgs),
    /// Compare PDAS against a dense QP solver on random small problems.
    Selftest {
        #[arg(long, default_value_t = 20)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        problems: usize,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Refinement levels run concurrently; overrides `jobs` in the config.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: Option<u64>,
    /// Leave the `# created` line out of the CSV files.
    #[arg(long)]
    pub no_timestamp: bool,
}

enum Failure {
    Config(ConfigError),
    NotConverged(Box<PdasReport>, String),
    Other(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<vifem::Error> for Failure {
    fn from(e: vifem::Error) -> Self {
        let msg = e.to_string();
        match e {
            vifem::Error::NotConverged(r) => Failure::NotConverged(r, msg),
            other => Failure::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

/// Runs a parsed command line and returns the process exit code. Failures
/// print one JSON record on stderr.
pub fn execute(cli: Cli) -> u8 {
    let outcome = match cli.command {
        Command::List => {
            for case in registry() {
                println!("{}", case.name());
            }
            Ok(())
        }
        Command::Converge(a) => run_experiment(Mode::Converge, &a),
        Command::Simulate(a) => run_experiment(Mode::Simulate, &a),
        Command::Stationary(a) => run_experiment(Mode::Stationary, &a),
        Command::Selftest { seed, problems } => run_selftest(seed, problems),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Config(e)) => {
            eprintln!("{}", json!({ "error": "config", "detail": e }));
            EXIT_CONFIG
        }
        Err(Failure::NotConverged(report, message)) => {
            eprintln!("{}", json!({ "error": "not_converged", "message": message, "report": report }));
            EXIT_NOT_CONVERGED
        }
        Err(Failure::Other(message)) => {
            eprintln!("{}", json!({ "error": "failure", "message": message }));
            EXIT_FAILURE
        }
    }
}

fn write(dir: &Path, name: &str, table: &Table, timestamp: Option<&str>, files: &mut Vec<String>) -> Result<(), Failure> {
    output::write_csv(&dir.join(name), table, timestamp)?;
    files.push(name.to_string());
    Ok(())
}

fn run_experiment(mode: Mode, args: &RunArgs) -> Result<(), Failure> {
    let cfg = RunConfig::load(&args.config)?;
    cfg.validate_for(mode).map_err(|mut e| {
        e.file = Some(args.config.display().to_string());
        e
    })?;
    let case = cfg.case()?;
    let settings = cfg.settings(args.jobs.map(|j| j as usize));
    let dir = args.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("vifem-out"));
    std::fs::create_dir_all(&dir)?;
    let now = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let timestamp = (!args.no_timestamp).then_some(now.as_str());

    let mut files = Vec::new();
    let (command, result): (&str, RunResult) = match mode {
        Mode::Converge => {
            let r = run_convergence(&case, &settings, &cfg.cells)?;
            write(&dir, "convergence.csv", &output::convergence_table(&r), timestamp, &mut files)?;
            ("converge", r)
        }
        Mode::Simulate => {
            let r = run_simulation(&case, &settings, cfg.cells[0], None)?;
            write(&dir, "steps.csv", &output::steps_table(&r), timestamp, &mut files)?;
            ("simulate", r)
        }
        Mode::Stationary => {
            let r = run_stationary(&case, &settings, cfg.cells[0])?;
            write(&dir, "stationary.csv", &output::stationary_table(&r), timestamp, &mut files)?;
            if let Some(u) = &r.final_state {
                write(&dir, "solution.csv", &output::solution_table(u), timestamp, &mut files)?;
            }
            ("stationary", r)
        }
    };
    output::write_manifest(&dir, command, &cfg, &result, &files, timestamp)?;
    for f in &files {
        println!("{}", dir.join(f).display());
    }
    println!("{}", dir.join("manifest.json").display());

    // A failed level leaves its row in the table; the run still reports it.
    if let Some(l) = result.levels.iter().find(|l| l.pdas_failure.is_some()) {
        let report = l.pdas_failure.clone().expect("checked");
        let msg = format!("{} cells: {}", l.cells, l.error.clone().unwrap_or_default());
        return Err(Failure::NotConverged(Box::new(report), msg));
    }
    if let Some(l) = result.levels.iter().find(|l| l.error.is_some()) {
        return Err(Failure::Other(format!("{} cells: {}", l.cells, l.error.clone().unwrap_or_default())));
    }
    Ok(())
}

fn run_selftest(seed: u64, problems: usize) -> Result<(), Failure> {
    let summary = selftest::run(seed, problems, |i, c| {
        println!(
            "problem {:2}: p={} dofs={:2} active={:2} iterations={} |u - oracle| = {:.2e}, J(u) - J(oracle) = {:.2e} {}",
            i + 1,
            c.p,
            c.dofs,
            c.active,
            c.iterations,
            c.max_diff,
            c.energy_gap,
            if c.passed { "ok" } else { "FAILED" }
        );
    });
    let failed = summary.comparisons.iter().filter(|c| !c.passed).count();
    if summary.passed {
        println!("selftest passed: {} problems", summary.comparisons.len());
        return Ok(());
    }
    Err(Failure::Other(format!(
        "selftest failed: {failed} of {} problems disagree with the oracle ({} requested)",
        summary.comparisons.len(),
        problems
    )))
}
