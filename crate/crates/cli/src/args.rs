use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use dynhin_core::{CellKind, FusionKind, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "dynhin", version, about = "Multi-view dynamic heterogeneous network embedding")]
pub struct Cli {
    /// Log filter used when RUST_LOG is unset.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parallel shards per mini-batch; 1 is bit-deterministic.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub cell: Option<CellKind>,
    #[arg(long)]
    pub fusion: Option<FusionKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let hp = &mut cfg.hyper;
        if let Some(v) = self.seed {
            hp.seed = v;
        }
        if let Some(v) = self.workers {
            hp.workers = v;
        }
        if let Some(v) = self.cell {
            hp.cell = v;
        }
        if let Some(v) = self.fusion {
            hp.fusion = v;
        }
        if let Some(v) = self.epochs {
            hp.epochs = v;
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse schema and edges, write the snapshot cache and stats.txt.
    Ingest {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Build (or load) the cached proximity views.
    BuildViews {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train and write checkpoints, loss trace and metadata.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Continue from the progress files in the output dir.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        emit_plot_data: bool,
    },
    /// Score a checkpoint and write report.csv / report.txt.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Defaults to the best checkpoint in the output dir.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dump_attention: bool,
    },
    /// Retrain and evaluate once per value of one axis.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// dimension | history | views | view_count
        #[arg(long)]
        axis: String,
        /// Comma-separated values; view sets join meta-paths with `+`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        emit_plot_data: bool,
    },
    /// Write a planted-community dynamic graph.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// JSON generator spec; defaults are used for missing fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}
