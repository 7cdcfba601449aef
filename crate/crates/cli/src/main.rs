use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

/// Inspect N-functions, run their inequality checks and solve Phi-Laplacian
/// Dirichlet problems from an INI config.
#[derive(Debug, Parser)]
#[command(name = "orlicz", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Directory for CSV and report output (overrides [output] dir).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Seed for every random choice (overrides [solver] seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Print nothing on success.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print growth indices and tabulate phi, Phi, its complement and Phi_* on the probe grid.
    Inspect { config: PathBuf },
    /// Minimize the discrete energy and write the solution, trace and report.
    Solve { config: PathBuf },
    /// Run the seeded inequality suite; exit 0 iff every property holds.
    Check { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(commands::EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
