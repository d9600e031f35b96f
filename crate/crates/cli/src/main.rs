use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use pagt_cli::commands::{self, exit_code};
use pagt_cli::config::RunConfig;
use pagt_core::Result;

#[derive(Debug, Parser)]
#[command(
    name = "pagt",
    version,
    about = "Pattern-aware ground-truth sampling for LiDAR point clouds"
)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the global seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for frame-parallel stages
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Override the output directory
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the ground-truth object database from the configured split
    BuildDb,
    /// Write pattern-aware augmented clouds, labels and a manifest
    Augment {
        /// Database directory (defaults to the configured one)
        #[arg(long)]
        db: Option<PathBuf>,
    },
    /// Equal-element distance-binned AP evaluation of detection files
    Eval {
        /// Directory of per-frame KITTI result files
        #[arg(long)]
        detections: PathBuf,
    },
    /// Before/after distance-distribution report over sampled objects
    Analyze {
        #[arg(long)]
        db: Option<PathBuf>,
    },
    /// Run the scan-simulator fidelity chain and check its bounds
    Simulate,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(output) = cli.output {
        cfg.output = output;
    }

    #[cfg(feature = "parallel")]
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| pagt_core::Error::InvalidConfig(format!("worker pool: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    if cli.workers.is_some() {
        eprintln!("pagt: --workers ignored (built without the parallel feature)");
    }

    match cli.command {
        Command::BuildDb => {
            commands::run_build_db(&cfg)?;
        }
        Command::Augment { db } => {
            let db_dir = db.unwrap_or_else(|| cfg.database_dir());
            commands::run_augment(&cfg, &db_dir)?;
        }
        Command::Eval { detections } => {
            commands::run_eval(&cfg, &detections)?;
        }
        Command::Analyze { db } => {
            let db_dir = db.unwrap_or_else(|| cfg.database_dir());
            commands::run_analyze(&cfg, &db_dir)?;
        }
        Command::Simulate => {
            commands::run_simulate(&cfg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors
            return ExitCode::from(3);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pagt: error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
