//! `milnor`: scenario-driven front end for the attractor, region, observer
//! and threshold analyses.
//!
//! Exit codes: 0 success, 1 negative verdict, 2 usage error, 3 numeric failure.

mod commands;
mod svg;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "milnor", version, about = "Weak-attractor certificates, invariant regions and observer diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Verb,
    /// Scenario file (`section.key = value` lines).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Overrides `output.csv`.
    #[arg(long, global = true)]
    out_csv: Option<PathBuf>,
    /// Overrides `output.svg`.
    #[arg(long, global = true)]
    out_svg: Option<PathBuf>,
    /// Suppresses the report on standard output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    /// Spectral split, Hessian test and cone certificate at the origin.
    Analyze,
    /// Comparison condition and forward-invariance sampling.
    Region,
    /// Integrates every start in `run.x0`.
    Simulate,
    /// Persistency-of-excitation certificate along an observer run.
    PeCheck,
    /// Observer run with tail-bound, decay-rate and exponential-envelope checks.
    Observer,
    /// Classifies a line of starts for the cascade example.
    Example,
    /// Empirical convergence threshold in `c2` for the cascade example.
    BisectThreshold,
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

pub struct Invocation {
    pub verb: Verb,
    pub scenario: milnor_core::scenario::Scenario,
    pub out_csv: Option<PathBuf>,
    pub out_svg: Option<PathBuf>,
    pub quiet: bool,
}

fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let Some(path) = cli.scenario else {
        eprintln!("error: --scenario <path> is required");
        return 2;
    };
    let text = match std::fs::read_to_string(&path) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return 2;
        }
    };
    let scenario = match milnor_core::scenario::parse_scenario(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return 2;
        }
    };
    let invocation = Invocation {
        verb: cli.command,
        out_csv: cli.out_csv.or_else(|| scenario.output.csv.clone()),
        out_svg: cli.out_svg.or_else(|| scenario.output.svg.clone()),
        scenario,
        quiet: cli.quiet,
    };
    match commands::dispatch(&invocation) {
        Ok(outcome) => {
            if !invocation.quiet {
                print!("{}", outcome.report);
            }
            if outcome.passed {
                0
            } else {
                1
            }
        }
        Err(f) => {
            match &f {
                Failure::Usage(m) | Failure::Numeric(m) => eprintln!("error: {m}"),
            }
            f.code()
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}
