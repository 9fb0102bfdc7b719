//! `flamesurf`: synthesize, estimate, render and evaluate flame surfaces.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flamesurf::eval::Baseline;

#[derive(Debug, Parser)]
#[command(name = "flamesurf", version, about = "Flame boundary surfaces from two thermal silhouettes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by the commands that run the estimator.
#[derive(Debug, Args)]
struct EstimatorArgs {
    /// Calibration rig JSON.
    #[arg(long)]
    rig: Option<PathBuf>,
    /// Intensity at or above which a pixel is flame.
    #[arg(long)]
    threshold: Option<u16>,
    /// Run configuration JSON; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Skip the IoU refinement.
    #[arg(long)]
    no_refine: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a scene spec to two PGMs, the rig and the ground-truth model.
    Synth {
        spec: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the spec's noise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run configuration JSON supplying `out` and `seed`; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Estimate a flame model from two thermal images.
    Estimate {
        img1: PathBuf,
        img2: PathBuf,
        #[command(flatten)]
        est: EstimatorArgs,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a model's silhouette in one rig view as an 8-bit mask PGM.
    Render {
        model: PathBuf,
        #[arg(long)]
        rig: PathBuf,
        /// 1-based camera index.
        #[arg(long, default_value_t = 1)]
        view: usize,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score arc and straight-line fits over a manifest of frames.
    Eval {
        manifest: PathBuf,
        #[command(flatten)]
        est: EstimatorArgs,
        /// Directory for report.csv and summary.json.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads across frames.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, value_enum, default_value = "both")]
        baseline: BaselineArg,
        /// Also report precision pooled over all pixels.
        #[arg(long)]
        pooled: bool,
        /// Accepted for symmetry with synth; evaluation draws no random numbers.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum BaselineArg {
    Straight,
    Arc,
    Both,
}

impl From<BaselineArg> for Baseline {
    fn from(b: BaselineArg) -> Self {
        match b {
            BaselineArg::Straight => Baseline::Straight,
            BaselineArg::Arc => Baseline::Arc,
            BaselineArg::Both => Baseline::Both,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { commands::EXIT_BAD_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
