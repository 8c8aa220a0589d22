//! `mapclean`: generate synthetic datasets, run the cleaners, score and compare them.
//!
//! Data and output paths go to stdout, diagnostics to stderr.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mapclean::config::Method;

#[derive(Parser)]
#[command(name = "mapclean", version, about = "Dynamic point removal benchmark for LiDAR maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scene and write it as a dataset directory.
    Synth {
        /// Built-in scene name.
        #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
        preset: Option<String>,
        /// JSON scene description instead of a preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Override the scene's noise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Replace an existing non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Run one cleaning method on a dataset.
    Run {
        /// removert, erasor, octomap, octomap_g or octomap_gf.
        #[arg(required_unless_present = "manifest")]
        method: Option<Method>,
        #[arg(long, required_unless_present = "manifest")]
        dataset: Option<PathBuf>,
        /// TOML configuration; defaults apply to missing keys.
        #[arg(long, conflicts_with = "manifest")]
        config: Option<PathBuf>,
        /// Repeat the run recorded in a run_manifest.json.
        #[arg(long, conflicts_with_all = ["method", "dataset", "seed"])]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Override the ground-estimation seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// Score a run against the dataset's ground truth.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// Directory written by `run`.
        #[arg(long)]
        run: PathBuf,
        /// Where to write the reports; defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate evaluated runs of one dataset as CSV.
    Compare {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { preset, spec, out, seed, force } => {
            commands::synth(preset.as_deref(), spec.as_deref(), &out, seed, force)
        }
        Command::Run { method, dataset, config, manifest, out, seed, force } => match manifest {
            Some(m) => commands::rerun(&m, &out, force),
            None => commands::run(
                method.expect("clap enforces method"),
                &dataset.expect("clap enforces dataset"),
                config.as_deref(),
                seed,
                &out,
                force,
            ),
        },
        Command::Eval { dataset, run, out } => commands::eval(&dataset, &run, out.as_deref()),
        Command::Compare { runs } => commands::compare(&runs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
