use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use incompat_cli::error::{CliError, CliResult};
use incompat_cli::reproduce::{reproduce_all, ReproduceConfig};
use incompat_cli::run::{run_file, solve_options, RunConfig};

#[derive(Parser)]
#[command(name = "incompat", version, about = "Incompatibility thresholds of quantum measurement assemblages")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file and write its result JSON.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Result path; defaults to the scenario's `out`, then stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Grid step for sim-grid.
        #[arg(long)]
        ell: Option<f64>,
        /// Worker threads for sim-grid and fuzz.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Solver tolerance; overrides INCOMPAT_SOLVER_TOL.
        #[arg(long)]
        tol: Option<f64>,
        /// Coarse grid (ell = 0.1) when no step is given.
        #[arg(long)]
        fast: bool,
        /// Also write the flat threshold table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Largest multi-copy dimension d^n allowed.
        #[arg(long)]
        max_copy_dim: Option<usize>,
    },
    /// Recompute every named threshold and compare with the expected values.
    Reproduce {
        /// Coarse grid; the full grid row is reported as SKIPPED-FAST.
        #[arg(long)]
        fast: bool,
        #[arg(long)]
        ell: Option<f64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        tol: Option<f64>,
        /// Also write the summary as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, hide = true)]
        corrupt_builtin: Option<String>,
    },
}

fn reproduce(
    fast: bool,
    ell: Option<f64>,
    jobs: usize,
    tol: Option<f64>,
    out: Option<PathBuf>,
    corrupt: Option<String>,
) -> CliResult<i32> {
    let cfg = ReproduceConfig { fast, ell, jobs, opts: solve_options(tol, None)?, corrupt };
    let summary = reproduce_all(&cfg)?;
    print!("{}", summary.to_table());
    if let Some(path) = out {
        std::fs::write(&path, summary.to_json() + "\n")
            .map_err(|e| CliError::invalid(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(if summary.passed() { 0 } else { 1 })
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Run { scenario, out, ell, jobs, tol, fast, csv, max_copy_dim } => {
            run_file(&scenario, &RunConfig { out, ell, jobs, tol, fast, csv, max_copy_dim })
        }
        Command::Reproduce { fast, ell, jobs, tol, out, corrupt_builtin } => {
            reproduce(fast, ell, jobs, tol, out, corrupt_builtin)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
