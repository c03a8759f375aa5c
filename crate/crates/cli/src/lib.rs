//! The `gamed` command line: synthetic data generation, training, evaluation,
//! ablation sweeps and per-record decision traces.
//!
//! Exit codes: 1 I/O or internal, 2 config or usage, 3 data, 4 divergence,
//! 5 model file (version, magic, corruption), 6 unknown record id.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod modelfile;
pub mod report;

use clap::{Args, Parser, Subcommand};
use config::Overrides;
use error::CliResult;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "gamed", version, about = "Toy multimodal fake-news detector with veto voting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/val/test JSONL splits and a manifest.
    GenData {
        /// Run config whose `[data]` table is the generator spec.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model; writes metrics.csv, model.bin and run.json.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory holding train, val and test splits.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        training: Training,
    },
    /// Score a model on one JSONL file; writes eval.json.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Decide by the fused head alone.
        #[arg(long)]
        no_veto: bool,
        /// Where eval.json goes; defaults to the model's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trace the vote on one record; writes trace-<id>.json.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        id: String,
        /// Where the trace goes; defaults to the model's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and score ablation variants; writes ablation.csv.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated variants: none, no_adain, no_veto, no_coarse,
        /// no_consistency, classic_mmoe, module_subset=<m>[+<m>...].
        #[arg(long)]
        grid: String,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        training: Training,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override any config key, e.g. `--set model.encoder.d=32`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct Training {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

fn overrides(common: &Common, training: Option<&Training>) -> Overrides {
    Overrides {
        seed: common.seed,
        out: common.out.clone(),
        epochs: training.and_then(|t| t.epochs),
        lr: training.and_then(|t| t.lr),
        set: common.set.clone(),
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::GenData { spec, common } => commands::gen_data(spec.as_deref(), &overrides(common, None)),
        Command::Train {
            config,
            data,
            common,
            training,
        } => commands::train_cmd(config.as_deref(), data, &overrides(common, Some(training))),
        Command::Eval {
            model,
            data,
            no_veto,
            out,
        } => commands::eval_cmd(model, data, *no_veto, out.as_deref()),
        Command::Explain { model, data, id, out } => commands::explain_cmd(model, data, id, out.as_deref()),
        Command::Ablate {
            config,
            data,
            grid,
            common,
            training,
        } => commands::ablate_cmd(config.as_deref(), data, grid, &overrides(common, Some(training))),
    }
}
