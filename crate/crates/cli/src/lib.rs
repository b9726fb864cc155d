//! Command-line front end: one subcommand per pipeline stage.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN-rejecting guards

pub mod commands;
pub mod error;
pub mod lock;
pub mod manifest;
pub mod render;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mflkit::models::ArchId;
use mflkit::scan::Split;

use crate::commands::*;
pub use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "mflkit",
    version,
    about = "Synthetic MFL scans, preprocessing and defect classifiers"
)]
pub struct Cli {
    /// Overrides every seed in the loaded configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON configuration for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
}

#[derive(Debug, Args)]
pub struct ScanInputs {
    #[arg(long)]
    pub scan: PathBuf,
    /// Delivered annotation report.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scan with clean and delivered reports.
    Synth,
    /// Build a labeled window dataset from a scan and its report.
    Preprocess(ScanInputs),
    /// Rebalance the train split with augmented copies.
    Augment {
        #[arg(long)]
        dataset: PathBuf,
        /// Augmentation policy JSON (default: scaled to the dataset).
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Train a classifier, checkpointing after every epoch.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Continue from the checkpoint in --out.
        #[arg(long)]
        resume: bool,
        /// Stop after this many epochs in this invocation.
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Confusion matrix and recalls of a checkpoint.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Expected architecture (CNN5, CNN5_LRN, CNN2, RayNet).
        #[arg(long)]
        arch: Option<String>,
        #[arg(long, value_enum, default_value = "validation")]
        split: SplitArg,
    },
    /// Train one model per ablation cell and write a comparison table.
    Ablate(ScanInputs),
    /// Write PNG renderings of a scan or a dataset.
    Render {
        #[arg(long, conflicts_with = "dataset")]
        scan: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Samples per scan strip.
        #[arg(long, default_value_t = 2048)]
        segment: usize,
        #[arg(long)]
        limit: Option<usize>,
        /// Render this tile once per filling method.
        #[arg(long)]
        filling_comparison: Option<usize>,
        #[arg(long, default_value_t = mflkit::preprocess::DEFAULT_ABNORMAL_THRESHOLD)]
        abnormal_threshold: u16,
    },
}

/// Sizes the global thread pool from `MFLKIT_THREADS` when set.
pub fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("MFLKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| CliError::Usage(format!("MFLKIT_THREADS must be a positive integer, got {v:?}")))?;
    if n == 0 {
        return Err(CliError::Usage("MFLKIT_THREADS must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))
}

pub fn run(cli: Cli) -> CliResult<()> {
    let Cli {
        seed,
        config,
        out,
        command,
    } = cli;
    match command {
        Command::Synth => {
            cmd_synth(&SynthOpts { config, seed, out })?;
        }
        Command::Preprocess(ScanInputs { scan, report }) => {
            let s = cmd_preprocess(&PreprocessOpts {
                scan,
                report,
                config,
                seed,
                out,
            })?;
            let c = s.manifest.class_counts;
            eprintln!(
                "train {:?} validation {:?} (healthy, defect, weld), {} left uncentered",
                c.train, c.validation, s.uncentered
            );
        }
        Command::Augment { dataset, policy } => {
            if config.is_some() {
                return Err(CliError::Usage("augment takes its settings from --policy".into()));
            }
            let m = cmd_augment(&AugmentOpts {
                dataset,
                policy,
                seed,
                out,
            })?;
            eprintln!("{} windows after balancing", m.windows.len());
        }
        Command::Train {
            dataset,
            resume,
            max_epochs,
        } => {
            cmd_train(&TrainOpts {
                dataset,
                config,
                seed,
                out,
                resume,
                max_epochs,
            })?;
        }
        Command::Eval {
            dataset,
            checkpoint,
            arch,
            split,
        } => {
            let arch = arch
                .map(|a| a.parse::<ArchId>())
                .transpose()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Validation => Split::Validation,
            };
            let r = cmd_eval(&EvalOpts {
                dataset,
                checkpoint,
                arch,
                split,
                out,
            })?;
            println!("average recall {:.4}", r.average_recall);
        }
        Command::Ablate(ScanInputs { scan, report }) => {
            cmd_ablate(&AblateOpts {
                scan,
                report,
                config,
                seed,
                out,
            })?;
        }
        Command::Render {
            scan,
            dataset,
            segment,
            limit,
            filling_comparison,
            abnormal_threshold,
        } => {
            let files = cmd_render(&RenderOpts {
                scan,
                dataset,
                out,
                segment,
                limit,
                filling_comparison,
                abnormal_threshold,
            })?;
            eprintln!("{} images written", files.len());
        }
    }
    Ok(())
}
