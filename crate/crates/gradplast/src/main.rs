use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gradplast::cli::{self, Overrides};

#[derive(Parser)]
#[command(
    name = "gradplast",
    about = "Incremental variational solver and certificate auditor for \
             curl-regularized visco-plastic evolution",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario: time-step the evolution, write the ledger and the
    /// certificate audit.
    Run {
        /// Scenario file (TOML).
        scenario: PathBuf,
        /// Output directory override.
        #[arg(long)]
        out: Option<PathBuf>,
        /// RNG seed override (recorded in every report).
        #[arg(long)]
        seed: Option<u64>,
        /// Solver tolerance override.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Refinement study across step counts with Cauchy diagnostics.
    Study {
        scenario: PathBuf,
        /// Comma-separated refinement levels, e.g. 8,16,32.
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Helmholtz-decompose a periodic matrix-field snapshot.
    Decompose {
        /// Field snapshot (GPF1, rank 9).
        field: PathBuf,
        /// Output directory for phi/psi/mean snapshots.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let result = match &args.command {
        Command::Run {
            scenario,
            out,
            seed,
            tol,
        } => cli::cmd_run(
            scenario,
            &Overrides {
                out_dir: out.clone(),
                seed: *seed,
                tol: *tol,
            },
        ),
        Command::Study {
            scenario,
            levels,
            out,
            seed,
            tol,
        } => cli::cmd_study(
            scenario,
            levels,
            &Overrides {
                out_dir: out.clone(),
                seed: *seed,
                tol: *tol,
            },
        ),
        Command::Decompose { field, out } => cli::cmd_decompose(field, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
