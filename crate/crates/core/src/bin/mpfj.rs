use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mpfj::scenario::{describe, run_scenario, Engine, Overrides, Scenario};
use mpfj::Error;

#[derive(Parser)]
#[command(name = "mpfj", version, about = "Latency, reliability and peak AoI of coded multipath streaming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a scenario file and write CSV results.
    Run {
        scenario: PathBuf,
        /// Output directory (created if missing).
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        engine: Option<Engine>,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of simulated blocks.
        #[arg(long)]
        blocks: Option<usize>,
        /// Integration grid step in seconds.
        #[arg(long)]
        grid_step: Option<f64>,
    },
    /// Parse a scenario file and list its grid points without running them.
    Check { scenario: PathBuf },
}

fn load(path: &Path, overrides: Overrides) -> Result<Scenario, Error> {
    let mut s = Scenario::load(path)?;
    s.apply(&overrides);
    s.validate()?;
    Ok(s)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { scenario, out, engine, seed, blocks, grid_step } => {
            let overrides = Overrides { engine, seed, n_blocks: blocks, grid_step };
            let s = load(&scenario, overrides)?;
            let report = run_scenario(&s, &out)?;
            for w in report.warnings() {
                eprintln!("warning: {w}");
            }
            for f in &report.files {
                println!("{}", f.display());
            }
        }
        Command::Check { scenario } => {
            let s = load(&scenario, Overrides::default())?;
            for p in s.points()? {
                println!("{:>4}  {}", p.index, describe(&p));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{msg}");
            match e {
                Error::Config(_) | Error::Scenario(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
