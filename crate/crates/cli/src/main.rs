//! `secrecy` command-line harness.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 numeric failure,
//! 3 a verification suite reported a failed check.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use secrecy_core::harness::config::Scenario;
use secrecy_core::harness::exec::Execution;
use secrecy_core::harness::runner::{export_traces, run_scenario, write_outputs};
use secrecy_core::harness::verify::{run_suite, Suite, VerifyOptions};
use secrecy_core::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERIC: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "secrecy", version, about = "Simulate and verify state-secrecy codes over erasure channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Base seed; overrides the scenario's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of Monte Carlo traces; overrides `runs` (or the suite's defaults).
    #[arg(long, global = true)]
    runs: Option<usize>,

    /// Output directory; overrides the scenario's `outputs`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Last time step simulated; overrides the scenario's `horizon`.
    #[arg(long, global = true)]
    horizon: Option<usize>,

    /// Run traces on the calling thread instead of the thread pool.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate every code of a scenario and write runs/summary files.
    Run { config: PathBuf },
    /// Run a verification suite and print its JSON report.
    Verify { suite: String },
    /// Write the sampled plant trajectories and channel outcomes as CSV.
    ExportTraces { config: PathBuf },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Lib(Error),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Verification) => ExitCode::from(EXIT_VERIFY),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric(_) => EXIT_NUMERIC,
        Error::InvalidArgument(_) | Error::Config { .. } | Error::Io { .. } | Error::Csv { .. } => EXIT_USAGE,
    }
}

fn execution(cli: &Cli) -> Execution {
    if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    if cli.runs == Some(0) {
        return Err(Failure::Usage("--runs must be at least 1".into()));
    }
    if cli.horizon == Some(0) {
        return Err(Failure::Usage("--horizon must be at least 1".into()));
    }
    match &cli.command {
        Command::Run { config } => {
            let scn = load(cli, config)?;
            let result = run_scenario(&scn, execution(cli))?;
            let out = cli.out.clone().unwrap_or_else(|| scn.outputs.clone());
            for path in write_outputs(&scn, &result, &out)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::ExportTraces { config } => {
            let scn = load(cli, config)?;
            let out = cli.out.clone().unwrap_or_else(|| scn.outputs.clone());
            let files = export_traces(&scn, &out, execution(cli))?;
            println!("wrote {} files under {}", files.len(), out.join("traces").display());
            Ok(())
        }
        Command::Verify { suite } => {
            if cli.horizon.is_some() {
                return Err(Failure::Usage("--horizon does not apply to verify".into()));
            }
            let suite: Suite = suite.parse()?;
            let defaults = VerifyOptions::default();
            let opts = VerifyOptions {
                seed: cli.seed.unwrap_or(defaults.seed),
                runs: cli.runs,
                out: cli.out.clone().unwrap_or_else(|| defaults.out.join(suite.name())),
                exec: execution(cli),
            };
            let report = run_suite(suite, &opts)?;
            let text = serde_json::to_string_pretty(&report).expect("reports serialize");
            std::fs::create_dir_all(&opts.out).map_err(|e| Failure::Usage(format!("{}: {e}", opts.out.display())))?;
            let path = opts.out.join(format!("{}.json", suite.name()));
            std::fs::write(&path, format!("{text}\n")).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            println!("{text}");
            for check in report.checks.iter().filter(|c| !c.passed) {
                eprintln!("{check}");
            }
            if report.passed {
                Ok(())
            } else {
                Err(Failure::Verification)
            }
        }
    }
}

fn load(cli: &Cli, config: &Path) -> Result<Scenario, Failure> {
    let mut scn = Scenario::load(config)?;
    if let Some(seed) = cli.seed {
        scn.seed = seed;
    }
    if let Some(runs) = cli.runs {
        scn.runs = runs;
    }
    if let Some(horizon) = cli.horizon {
        scn.horizon = horizon;
    }
    Ok(scn)
}
