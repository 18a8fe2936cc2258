use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ionlattice::config::ExperimentConfig;
use ionlattice::harness::{exit_code, run_scenario, write_artifacts, Command};
use ionlattice::Error;

/// Phase-stable optical lattice simulator for a single trapped ion.
#[derive(Parser, Debug)]
#[command(name = "ionlattice", version)]
struct Cli {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Closed-loop lattice-phase stabilisation against interferometer drift.
    Lock {
        /// Simulated duration in seconds.
        #[arg(long)]
        duration_s: Option<f64>,
    },
    /// Spin-echo signal against exposure time at several lattice positions.
    TimeScan,
    /// Optical and electrical kick interference against the kick delay.
    KickScan,
    /// Synthetic resolved and aliased shift-voltage scans.
    PositionScan,
    /// Fit a fifth-order position map to scan data.
    FitMap,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match (&cli.config, cli.seed) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(seed)) => ExperimentConfig::with_seed(seed),
        (None, None) => return Err(Error::Config("either --config or --seed is required".into())),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Lock { duration_s } => Command::Lock { duration_s },
        Cmd::TimeScan => Command::TimeScan,
        Cmd::KickScan => Command::KickScan,
        Cmd::PositionScan => Command::PositionScan,
        Cmd::FitMap => Command::FitMap,
    };
    let result = load(&cli).and_then(|cfg| {
        let out = cli
            .out
            .clone()
            .or_else(|| cfg.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        let run = run_scenario(&cfg, &command, &out)?;
        write_artifacts(&out, &run.artifacts)?;
        Ok(run.line)
    });
    match result {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ionlattice: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
