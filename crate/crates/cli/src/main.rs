//! `noether`: audit models, solve boundary value problems and verify paths from a config file.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::{EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "noether", version, about = "Noether-reduced action minimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Model configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "noether-out")]
    pub out: PathBuf,
    /// Random seed; defaults to the `[audit] seed` of the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct Endpoints {
    /// Start point, comma separated; entries may be constant expressions such as `pi/2`.
    #[arg(long, allow_hyphen_values = true)]
    pub p: String,
    /// End point.
    #[arg(long, allow_hyphen_values = true)]
    pub q: String,
    /// Overrides the solver mode (`reduced_x` or `projected_full`).
    #[arg(long)]
    pub mode: Option<String>,
    /// Final grid size; coarser config levels are kept as a warm start.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the structural constants and identities of a model.
    Audit {
        #[command(flatten)]
        common: Common,
    },
    /// Minimize the reduced action between two points.
    Solve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ends: Endpoints,
        /// Winding per periodic coordinate, e.g. `x0:-1`.
        #[arg(long, allow_hyphen_values = true)]
        winding: Option<String>,
    },
    /// Solve from every winding class in a range.
    Multistart {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ends: Endpoints,
        /// Winding ranges, e.g. `x0:-1..2`.
        #[arg(long, allow_hyphen_values = true)]
        windings: String,
    },
    /// Project a path onto the constant-charge set.
    Project {
        #[command(flatten)]
        common: Common,
        /// Path CSV with header `s,x0,...`.
        #[arg(long)]
        path: PathBuf,
    },
    /// Check a path against the Euler-Lagrange, energy and charge criteria.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        path: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let argv: Vec<String> = std::env::args().collect();
    let line = argv.join(" ");
    let result = match &cli.command {
        Command::Audit { common } => commands::audit(common, &line),
        Command::Solve { common, ends, winding } => commands::solve(common, ends, winding.as_deref(), &line),
        Command::Multistart { common, ends, windings } => commands::multistart(common, ends, windings, &line),
        Command::Project { common, path } => commands::project(common, path, &line),
        Command::Verify { common, path } => commands::verify(common, path, &line),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
