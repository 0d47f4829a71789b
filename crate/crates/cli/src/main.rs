//! `loha`: train, ablate and inspect two-view spectral contrastive encoders.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use loha::experiment::Variant;
use loha::graph::SbmSpec;

use crate::commands::Common;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "loha", version, about = "Low-pass / high-pass spectral contrastive node embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain, probe and write metrics, loss curves and learned filters.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base training seed; overrides `[train] seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// One of full, no_sliding, no_reunion, no_contrast, var1, var3.
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Run all six variants and write accuracy ratios to the full model.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare low/high views with band-stop/band-pass views.
    DemoBand {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Monte Carlo check of the composite-feature concentration bound.
    /// Exits with status 1 if any grid point exceeds the bound.
    CheckTheorem {
        /// Optional config; only its `[theorem]` and `[output]` tables are used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Filters from a training snapshot instead of the initial ones.
        #[arg(long)]
        snapshot: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Plot the responses stored in a filter snapshot.
    PlotFilters {
        snapshot: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Sample a stochastic block model graph in the plain three-file format.
    SbmGen {
        #[arg(long)]
        nodes: usize,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long)]
        p_in: f64,
        #[arg(long)]
        p_out: f64,
        #[arg(long, default_value_t = 1.0)]
        feature_noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train {
            config,
            out,
            seed,
            variant,
        } => commands::train(&Common::load(&config, out, seed)?, variant),
        Command::Ablate { config, out, seed } => commands::ablate(&Common::load(&config, out, seed)?),
        Command::DemoBand { config, out, seed } => commands::demo_band(&Common::load(&config, out, seed)?),
        Command::CheckTheorem {
            config,
            out,
            snapshot,
            seed,
        } => commands::check_theorem(config.as_deref(), out, snapshot.as_deref(), seed),
        Command::PlotFilters { snapshot, out } => commands::plot_filters(&snapshot, &out),
        Command::SbmGen {
            nodes,
            classes,
            p_in,
            p_out,
            feature_noise,
            seed,
            out,
        } => commands::sbm_gen(
            &SbmSpec {
                nodes,
                classes,
                p_in,
                p_out,
                feature_noise,
                seed,
            },
            &out,
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
