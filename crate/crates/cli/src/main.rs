//! `snls`: command-line driver for the stochastic NLS simulator.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical abort,
//! 3 invariant or statistical failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "snls", version, about = "Stochastic NLS with multiplicative Lévy jump noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Parent directory of the run directory (overrides [output].dir).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Root seed (overrides the config's `seed`).
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for ensemble runs (default: all cores).
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a single path and write its observable series.
    Simulate(Common),
    /// Monte Carlo ensemble with mass and bound statistics.
    Ensemble(Common),
    /// Classify the coefficient pair and report the measure constants.
    VerifyHypotheses(Common),
    /// Coupled path differences across small-jump truncation levels.
    TruncationStudy(Common),
    /// Self-convergence of the path solutions under dt refinement.
    DtStudy(Common),
    /// Power-law decay of the free group in L^p.
    DispersiveTest(Common),
    /// First-order convergence of the mild-form residual.
    MildResidual(Common),
}

/// Why a run did not succeed; selects the exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
    Invariant(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Invariant(_) => 3,
        }
    }
}

impl From<snls::Error> for Failure {
    fn from(e: snls::Error) -> Self {
        if e.is_numerical_abort() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical abort: {m}"),
            Failure::Invariant(m) => write!(f, "invariant failure: {m}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common, run): (&str, &Common, commands::Handler) = match &cli.command {
        Command::Simulate(c) => ("simulate", c, commands::simulate),
        Command::Ensemble(c) => ("ensemble", c, commands::ensemble),
        Command::VerifyHypotheses(c) => ("verify-hypotheses", c, commands::verify_hypotheses),
        Command::TruncationStudy(c) => ("truncation-study", c, commands::truncation_study),
        Command::DtStudy(c) => ("dt-study", c, commands::dt_study),
        Command::DispersiveTest(c) => ("dispersive-test", c, commands::dispersive_test),
        Command::MildResidual(c) => ("mild-residual", c, commands::mild_residual),
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", Failure::Config(format!("--threads: {e}")));
            return ExitCode::from(1);
        }
    }
    match commands::execute(name, common, run) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code())
        }
    }
}
