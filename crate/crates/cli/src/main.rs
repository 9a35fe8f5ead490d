//! `scene4d`: command-line front end for the 4D driving-scene engine.
//!
//! Logging goes to standard error; each successful command prints a
//! one-line JSON summary to standard output. Exit codes: 0 success,
//! 2 input or validation error, 3 processing error.

mod commands;
mod config;
mod error;

use clap::{Parser, Subcommand};
use error::CliError;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "scene4d", version, about = "4D driving-scene pipeline")]
struct Cli {
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress details to standard error.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct and align a scene from a capture manifest.
    Build {
        /// Capture manifest JSON (may come from the config instead).
        manifest: Option<PathBuf>,
        /// Scene output directory (may come from the config instead).
        out_dir: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Render a camera trajectory from a built scene.
    Render {
        scene_dir: PathBuf,
        out_dir: PathBuf,
        /// Trajectory spec JSON.
        #[arg(long)]
        config: PathBuf,
    },
    /// Export condition/target training pairs from a built scene.
    ExportPairs {
        scene_dir: PathBuf,
        /// The capture manifest the scene was built from.
        manifest: PathBuf,
        out_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Flag points inside removal boxes and write a new scene artifact.
    Remove {
        scene_dir: PathBuf,
        out_dir: PathBuf,
        /// Removal box list JSON.
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a render directory against ground-truth images.
    Eval {
        render_dir: PathBuf,
        gt_dir: PathBuf,
        out_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic scene with exact ground truth.
    Synth {
        out_dir: PathBuf,
        /// Synthetic scene spec JSON.
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Input(format!("cannot size the thread pool: {e}")))?;
    }
    match cli.command {
        Command::Build {
            manifest,
            out_dir,
            config,
        } => commands::cmd_build(manifest, out_dir, config),
        Command::Render {
            scene_dir,
            out_dir,
            config,
        } => commands::cmd_render(scene_dir, out_dir, config),
        Command::ExportPairs {
            scene_dir,
            manifest,
            out_dir,
            config,
        } => commands::cmd_export_pairs(scene_dir, manifest, out_dir, config),
        Command::Remove {
            scene_dir,
            out_dir,
            config,
        } => commands::cmd_remove(scene_dir, out_dir, config),
        Command::Eval {
            render_dir,
            gt_dir,
            out_dir,
            config,
        } => commands::cmd_eval(render_dir, gt_dir, out_dir, config),
        Command::Synth { out_dir, config } => commands::cmd_synth(out_dir, config),
    }
}

fn main() {
    let cli = Cli::parse();
    let filter = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(filter)).init();
    match run(cli) {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
