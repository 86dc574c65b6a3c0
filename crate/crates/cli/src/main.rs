//! `wavetank`: batch verification driver for the tank solver.
//!
//! Reads a declarative TOML run configuration, executes the requested kind
//! of experiment, and writes machine-readable results, plot-ready series
//! and a human summary into the output directory.
//!
//! Exit codes: 0 all requested checks passed; 1 a check failed its
//! tolerance; 2 invalid configuration; 3 numerical failure.

mod config;
mod emit;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{Kind, RunConfig};
use runner::RunError;

#[derive(Parser)]
#[command(name = "wavetank", about = "water-wave tank verification runs")]
struct Args {
    /// Path to the TOML run configuration.
    config: PathBuf,
    /// Override the experiment kind from the config file.
    #[arg(long)]
    kind: Option<Kind>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for independent runs in a scan.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Override the random seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let mut cfg = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: invalid configuration: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(kind) = args.kind {
        cfg.kind = kind;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error: invalid configuration: {e}");
        return ExitCode::from(2);
    }

    let out_dir = args
        .out
        .or_else(|| cfg.out.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("out/{}", cfg.kind)));

    match runner::run(&cfg, args.jobs.max(1)) {
        Ok(artifacts) => {
            if let Err(e) = artifacts.write(&out_dir) {
                eprintln!("error: cannot write artifacts to {}: {e}", out_dir.display());
                return ExitCode::from(3);
            }
            print!("{}", artifacts.summary);
            println!("artifacts: {}", out_dir.display());
            if artifacts.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(RunError::Config(msg)) => {
            eprintln!("error: invalid configuration: {msg}");
            ExitCode::from(2)
        }
        Err(RunError::Numerical { stage, message }) => {
            eprintln!("error: numerical failure during {stage}: {message}");
            ExitCode::from(3)
        }
    }
}
