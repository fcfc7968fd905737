use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use silt_core::config::ExperimentConfig;
use silt_core::runner::{apply_overrides, run};

/// Numerical experiments on self-intersection local times of stable walks.
#[derive(Parser, Debug)]
#[command(name = "siltlab", version)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long, env = "SILT_SEED")]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, env = "SILT_WORKERS")]
    workers: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match ExperimentConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    apply_overrides(&mut cfg, cli.seed, cli.out.as_deref());
    match run(&cfg, cli.workers) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            println!(
                "wrote {} files to {} ({:.1} s)",
                outcome.manifest.files.len(),
                cfg.output_dir.display(),
                outcome.manifest.wall_seconds
            );
            if outcome.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
