//! `ultrafield`: runs the p-adic field pipelines from a key-value config.
//!
//! Exit codes: 0 pass, 1 mathematical rejection or failed check, 2 usage or
//! config error.

mod commands;
mod config;
mod error;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Context;
use config::Config;
use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "ultrafield", version, about = "p-adic Euclidean field experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (`key = value`, optional `[subcommand]` sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for the library's parallel loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Certify a polynomial as elliptic or print a witness.
    Ellipticity,
    /// Green kernel, series cross-check and decay fits.
    Green,
    /// Solve the Klein-Gordon equation for a right-hand side.
    Solve,
    /// Sample noise and field, check the field characteristic functional.
    Sample,
    /// Empirical characteristic function of the noise increments.
    CharCheck,
    /// Analytic and Monte-Carlo Schwinger functions.
    Schwinger,
    /// Brownian sheet paths and covariance.
    Sheet,
    /// Euclidean invariance report.
    Symmetry,
}

impl Command {
    fn section(self) -> &'static str {
        match self {
            Command::Ellipticity => "ellipticity",
            Command::Green => "green",
            Command::Solve => "solve",
            Command::Sample => "sample",
            Command::CharCheck => "char-check",
            Command::Schwinger => "schwinger",
            Command::Sheet => "sheet",
            Command::Symmetry => "symmetry",
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure threads: {e}")))?;
    }
    let path = cli.config.as_ref().ok_or_else(|| CliError::Usage("--config is required".into()))?;
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
    let ctx = Context { cfg: Config::parse(&text, cli.command.section())?, out: cli.out.clone(), seed: cli.seed };
    match cli.command {
        Command::Ellipticity => commands::ellipticity(&ctx),
        Command::Green => commands::green(&ctx),
        Command::Solve => commands::solve(&ctx),
        Command::Sample => commands::sample(&ctx),
        Command::CharCheck => commands::char_check(&ctx),
        Command::Schwinger => commands::schwinger(&ctx),
        Command::Sheet => commands::sheet(&ctx),
        Command::Symmetry => commands::symmetry(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
