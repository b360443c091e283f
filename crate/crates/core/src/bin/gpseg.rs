use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gpseg::commands::{cmd_check, cmd_minimax, cmd_relax, cmd_sweep, Outcome};
use gpseg::config::RunConfig;
use gpseg::Error;

#[derive(Parser)]
#[command(name = "gpseg", version, about = "Gross-Pitaevskii segregation solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// RNG seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Relax one state to stationarity.
    Relax,
    /// Estimate a minimax level and extract its critical point.
    Minimax,
    /// Sweep the coupling schedule against the limit problem.
    Sweep,
    /// Run the randomized invariant suites.
    Check,
}

fn run(cli: &Cli) -> Result<Outcome, Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Relax => cmd_relax(&cfg),
        Command::Minimax => cmd_minimax(&cfg),
        Command::Sweep => cmd_sweep(&cfg),
        Command::Check => cmd_check(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            if !cli.quiet {
                println!("{}", outcome.summary.trim_end());
                for f in &outcome.files {
                    println!("wrote {}", f.display());
                }
            }
            if outcome.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            let msg = serde_json::to_string(&e.to_string()).unwrap_or_default();
            eprintln!(
                "error kind={} code={} message={msg}",
                e.kind(),
                e.exit_code()
            );
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
