//! `smg`: solve, continue, foliate and diagnose intrinsic minimal graphs from a TOML config.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "smg", version, about = "Intrinsic minimal graphs by vanishing viscosity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single-ε solve: writes u.csv and residuals.csv.
    Solve(Common),
    /// ε-schedule continuation: writes u.csv, residuals.csv and sweep.csv.
    Viscosity(Common),
    /// Horizontal leaves of a solution: writes leaves.csv and report.csv.
    Foliate(Common),
    /// Frozen Taylor order checks and Caccioppoli integrals.
    Diagnose(Common),
}

#[derive(Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "SMG_THREADS")]
    pub threads: Option<usize>,
    /// Seed lattice as `RxC`, e.g. `7x7`.
    #[arg(long, value_parser = parse_lattice)]
    pub seed_lattice: Option<(usize, usize)>,
}

fn parse_lattice(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected RxC, got '{s}'"))?;
    let r: usize = r.trim().parse().map_err(|_| format!("bad row count in '{s}'"))?;
    let c: usize = c.trim().parse().map_err(|_| format!("bad column count in '{s}'"))?;
    if r == 0 || c == 0 {
        return Err("lattice dimensions must be positive".into());
    }
    Ok((r, c))
}

/// Process outcome; the exit code is 1 for configuration or IO problems and 2 for
/// numerical failures.
pub enum Failure {
    Config(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numerical(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (common, run): (&Common, fn(&Common) -> Result<(), Failure>) = match &cli.command {
        Command::Solve(c) => (c, commands::solve),
        Command::Viscosity(c) => (c, commands::viscosity),
        Command::Foliate(c) => (c, commands::foliate),
        Command::Diagnose(c) => (c, commands::diagnose),
    };
    if let Some(n) = common.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match run(common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
