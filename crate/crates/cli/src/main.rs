mod commands;
mod config;
mod error;
mod io;
mod suite;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{Overrides, RunConfig};
use crate::error::{CliError, CliResult};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  suite: at least one invariant failed
  2  validation error (bad config, malformed input, target outside trust region)
  3  immersion lost, particle crossing or blow-up during integration
  4  non-convergence (shooting or eigensolver)
  5  I/O error";

#[derive(Debug, Parser)]
#[command(name = "sobgeo", version, about = "Geodesics of fractional Sobolev metrics on loops", after_help = EXIT_CODES)]
struct Cli {
    /// JSON config file; flags override its fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Seed for randomized fields
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long, global = true, env = "SOBGEO_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the geodesic from a curve and an initial velocity
    Exp {
        /// Initial curve (JSON samples)
        #[arg(long)]
        curve: PathBuf,
        /// Initial velocity (JSON samples)
        #[arg(long)]
        velocity: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Recover the initial velocity joining two curves by shooting
    Log {
        /// Start curve (JSON samples)
        #[arg(long)]
        curve_a: PathBuf,
        /// Target curve (JSON samples)
        #[arg(long)]
        curve_b: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the Lagrangian and Eulerian diffeomorphism solvers from u0
    Epdiff {
        /// Initial Eulerian velocity (JSON samples with d = 1)
        #[arg(long)]
        u0: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Eigenvalues of the operator on a curve (default: unit circle)
    Spectrum {
        /// Curve (JSON samples)
        #[arg(long)]
        curve: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the invariant suite and write a pass/fail report
    Suite {
        /// Report path (default: OUT/suite_report.json)
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

impl Command {
    fn overrides(&self) -> &Overrides {
        match self {
            Command::Exp { overrides, .. }
            | Command::Log { overrides, .. }
            | Command::Epdiff { overrides, .. }
            | Command::Spectrum { overrides, .. }
            | Command::Suite { overrides, .. } => overrides,
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Validation("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Validation(e.to_string()))?;
    }
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply(cli.command.overrides(), cli.seed);
    cfg.validate()?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Exp { curve, velocity, .. } => commands::exp(&mut cfg, curve, velocity, out),
        Command::Log { curve_a, curve_b, .. } => commands::log(&mut cfg, curve_a, curve_b, out),
        Command::Epdiff { u0, .. } => commands::epdiff(&mut cfg, u0, out),
        Command::Spectrum { curve, .. } => commands::spectrum(&mut cfg, curve.as_deref(), out),
        Command::Suite { report, .. } => {
            let (value, failed) = suite::run(&cfg);
            let path = report.clone().unwrap_or_else(|| out.join("suite_report.json"));
            io::write_json(&path, &value)?;
            if failed > 0 {
                return Err(CliError::InvariantsFailed { failed });
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sobgeo: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code())
        }
    }
}
