use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use mflkit::augment::{balance_dataset, AugmentPolicy};
use mflkit::models::{
    checkpoint_arch, run_ablation, AblationBase, AblationGrid, ArchId, ComparisonRow, ComparisonTable, ConfusionMatrix,
    TrainConfig, Trainer,
};
use mflkit::nn::Checkpoint;
use mflkit::preprocess::{self, fill, normalize, store, FillingMethod, NormalizationScope, PreprocessConfig};
use mflkit::scan::{read_report, read_scan, write_report, write_scan, Split, WindowImage, WINDOW};
use mflkit::synth::{default_desk_config, generate, SynthConfig};

use crate::error::{CliError, CliResult};
use crate::lock::OutputLock;
use crate::manifest::StageManifest;
use crate::render;

pub const SCAN_FILE: &str = "scan.mfls";
pub const CLEAN_REPORT_FILE: &str = "clean_report.json";
pub const DELIVERED_REPORT_FILE: &str = "delivered_report.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.mflc";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const MODEL_FILE: &str = "model.json";

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))
        }
    }
}

fn json_value<T: Serialize>(v: &T) -> CliResult<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| CliError::Internal(e.to_string()))
}

/// Writes through a temporary file so a crash never leaves a torn output.
fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct SynthOpts {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

/// Synthetic scan plus clean and delivered reports.
pub fn cmd_synth(opts: &SynthOpts) -> CliResult<StageManifest> {
    let mut config: SynthConfig = match &opts.config {
        None => default_desk_config(),
        Some(p) => read_config(Some(p))?,
    };
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    config.validate()?;
    let _lock = OutputLock::acquire(&opts.out)?;
    let out = generate(&config)?;
    write_scan(&out.scan, opts.out.join(SCAN_FILE))?;
    write_report(&out.clean, opts.out.join(CLEAN_REPORT_FILE))?;
    write_report(&out.delivered, opts.out.join(DELIVERED_REPORT_FILE))?;
    StageManifest::new("synth", json_value(&config)?)
        .seed("synth", config.seed)
        .write(&opts.out, &[SCAN_FILE, CLEAN_REPORT_FILE, DELIVERED_REPORT_FILE])
}

#[derive(Debug, Clone, Default)]
pub struct PreprocessOpts {
    pub scan: PathBuf,
    pub report: PathBuf,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

pub struct PreprocessSummary {
    pub manifest: store::DatasetManifest,
    pub uncentered: usize,
}

/// Align, window, center, label, split, fill and normalize; writes a window dataset.
pub fn cmd_preprocess(opts: &PreprocessOpts) -> CliResult<PreprocessSummary> {
    let mut config: PreprocessConfig = read_config(opts.config.as_deref())?;
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    config.validate()?;
    let scan = read_scan(&opts.scan)?;
    let report = read_report(&opts.report)?;
    let _lock = OutputLock::acquire(&opts.out)?;
    let result = preprocess::run(&scan, &report, &config)?;
    write_report(&result.aligned, opts.out.join("aligned_report.json"))?;
    let meta = store::ManifestMeta {
        stage: "preprocess".into(),
        config: json_value(&config)?,
        inputs: [
            ("scan".to_string(), mflkit::hashing::hash_file(&opts.scan)?),
            ("report".to_string(), mflkit::hashing::hash_file(&opts.report)?),
        ]
        .into(),
        filling: config.filling,
        range: result.range,
    };
    let manifest = store::save_dataset(&opts.out, &result.dataset, &[], meta)?;
    Ok(PreprocessSummary {
        manifest,
        uncentered: result.uncentered,
    })
}

#[derive(Debug, Clone, Default)]
pub struct AugmentOpts {
    pub dataset: PathBuf,
    /// Policy JSON; defaults to the standard kinds with x15 defect and x10 weld targets.
    pub policy: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

/// Rebalances the train split of a stored dataset.
pub fn cmd_augment(opts: &AugmentOpts) -> CliResult<store::DatasetManifest> {
    let (dataset, input) = store::load_dataset(&opts.dataset)?;
    let mut policy = match &opts.policy {
        Some(p) => read_config::<AugmentPolicy>(Some(p))?,
        None => AugmentPolicy::scaled_for(&dataset, opts.seed.unwrap_or(0)),
    };
    if let Some(seed) = opts.seed {
        policy.classes.iter_mut().for_each(|c| c.seed = seed);
    }
    policy.validate()?;
    let _lock = OutputLock::acquire(&opts.out)?;
    let (balanced, names) = balance_dataset(&dataset, &policy)?;
    let meta = store::ManifestMeta {
        stage: "augment".into(),
        config: json_value(&policy)?,
        inputs: [(
            "dataset".to_string(),
            mflkit::hashing::hash_file(opts.dataset.join(store::MANIFEST_FILE))?,
        )]
        .into(),
        filling: input.filling,
        range: input.range,
    };
    Ok(store::save_dataset(&opts.out, &balanced, &names, meta)?)
}

#[derive(Debug, Clone, Default)]
pub struct TrainOpts {
    pub dataset: PathBuf,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    /// Continue from `checkpoint.mflc` in the output directory if present.
    pub resume: bool,
    /// Stop after this many epochs in this invocation (the run can be resumed later).
    pub max_epochs: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerShape {
    layer: String,
    output: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelReport {
    arch: String,
    reconstruction: bool,
    parameters: usize,
    layers: Vec<LayerShape>,
}

fn write_history(path: &Path, trainer: &Trainer) -> CliResult<()> {
    let mut text = String::new();
    for r in &trainer.history {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

/// Trains a model on a stored dataset; writes a checkpoint after every epoch.
pub fn cmd_train(opts: &TrainOpts) -> CliResult<Trainer> {
    let mut config: TrainConfig = read_config(opts.config.as_deref())?;
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    config.validate()?;
    let (dataset, _) = store::load_dataset(&opts.dataset)?;
    let _lock = OutputLock::acquire(&opts.out)?;
    let ck_path = opts.out.join(CHECKPOINT_FILE);
    let mut trainer = if opts.resume && ck_path.exists() {
        let t = Trainer::from_checkpoint(&Checkpoint::load(&ck_path)?)?;
        if t.config != config {
            return Err(CliError::Usage(
                "checkpoint was trained with a different configuration".into(),
            ));
        }
        t
    } else {
        Trainer::new(config.clone())?
    };
    let report = ModelReport {
        arch: config.arch.id().to_string(),
        reconstruction: config.arch.is_reconstruction(),
        parameters: trainer.model.net.param_count(),
        layers: trainer
            .model
            .layer_report(config.batch_size)?
            .into_iter()
            .map(|(layer, output)| LayerShape {
                layer: layer.to_string(),
                output,
            })
            .collect(),
    };
    std::fs::write(opts.out.join(MODEL_FILE), serde_json::to_string_pretty(&report)? + "\n")?;
    let stop = opts
        .max_epochs
        .map_or(config.epochs, |m| (trainer.epochs_done() + m).min(config.epochs));
    let history_path = opts.out.join(HISTORY_FILE);
    while trainer.epochs_done() < stop {
        let r = trainer.train_epoch(&dataset)?;
        write_atomic(&ck_path, &trainer.checkpoint()?.encode())?;
        write_history(&history_path, &trainer)?;
        eprintln!(
            "epoch {:>2}: train {:.4} val {:.4} avg recall {:.4} lr {:.2e}",
            r.epoch, r.train_loss, r.val_loss, r.average_recall, r.lr
        );
    }
    if trainer.epochs_done() == 0 {
        write_atomic(&ck_path, &trainer.checkpoint()?.encode())?;
        write_history(&history_path, &trainer)?;
    }
    StageManifest::new("train", json_value(&config)?)
        .seed("train", config.seed)
        .input("dataset", &opts.dataset.join(store::MANIFEST_FILE))?
        .write(&opts.out, &[CHECKPOINT_FILE, HISTORY_FILE, MODEL_FILE])?;
    Ok(trainer)
}

#[derive(Debug, Clone)]
pub struct EvalOpts {
    pub dataset: PathBuf,
    pub checkpoint: PathBuf,
    /// When given, must match the checkpoint's architecture.
    pub arch: Option<ArchId>,
    pub split: Split,
    pub out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub arch: String,
    pub classes: Vec<String>,
    pub confusion: ConfusionMatrix,
    pub recalls: Vec<Option<f64>>,
    pub average_recall: f64,
    pub loss: f64,
}

/// Confusion matrix and recall table of a checkpoint on one split.
pub fn cmd_eval(opts: &EvalOpts) -> CliResult<EvalReport> {
    let ck = Checkpoint::load(&opts.checkpoint)?;
    let (arch, task) = checkpoint_arch(&ck)?;
    if let Some(expected) = opts.arch {
        if expected != arch {
            return Err(CliError::Data(format!("checkpoint holds {arch}, not {expected}")));
        }
    }
    let trainer = Trainer::from_checkpoint(&ck)?;
    let (dataset, _) = store::load_dataset(&opts.dataset)?;
    let _lock = OutputLock::acquire(&opts.out)?;
    let (loss, cm) = trainer.evaluate(&dataset, opts.split)?;
    let recalls: Vec<Option<f64>> = (0..cm.classes()).map(|k| cm.recall(k).ok()).collect();
    let report = EvalReport {
        arch: arch.id().to_string(),
        classes: task.class_names().iter().map(|s| s.to_string()).collect(),
        average_recall: cm.average_recall()?,
        confusion: cm,
        recalls: recalls.clone(),
        loss,
    };
    std::fs::write(
        opts.out.join("eval.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    let table = ComparisonTable {
        task,
        rows: vec![ComparisonRow {
            method: arch.display_name().to_string(),
            recalls: recalls.iter().map(|r| r.map_or(f64::NAN, |r| r * 100.0)).collect(),
            average: report.average_recall * 100.0,
        }],
    };
    std::fs::write(opts.out.join("recall.csv"), table.to_csv())?;
    Ok(report)
}

/// Grid plus the shared base configuration, as read from `--config`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationPlan {
    pub grid: AblationGrid,
    pub base: AblationBase,
}

#[derive(Debug, Clone, Default)]
pub struct AblateOpts {
    pub scan: PathBuf,
    pub report: PathBuf,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

/// One training run per grid cell; writes `table.csv` with one row per cell.
pub fn cmd_ablate(opts: &AblateOpts) -> CliResult<ComparisonTable> {
    let mut plan: AblationPlan = read_config(opts.config.as_deref())?;
    if let Some(seed) = opts.seed {
        plan.base.preprocess.seed = seed;
        plan.base.train.seed = seed;
        plan.base.augment_seed = plan.base.augment_seed.map(|_| seed);
    }
    plan.base.preprocess.validate()?;
    plan.base.train.validate()?;
    let scan = read_scan(&opts.scan)?;
    let report = read_report(&opts.report)?;
    let _lock = OutputLock::acquire(&opts.out)?;
    let rows_path = opts.out.join("rows.jsonl");
    let mut rows = std::fs::File::create(&rows_path)?;
    let table = run_ablation(&scan, &report, &plan.grid, &plan.base, |_, row| {
        eprintln!("{}: average {:.2}", row.method, row.average);
        writeln!(rows, "{}", serde_json::to_string(row)?)?;
        Ok(())
    })?;
    std::fs::write(opts.out.join("table.csv"), table.to_csv())?;
    StageManifest::new("ablate", json_value(&plan)?)
        .seed("preprocess", plan.base.preprocess.seed)
        .seed("train", plan.base.train.seed)
        .input("scan", &opts.scan)?
        .input("report", &opts.report)?
        .write(&opts.out, &["table.csv", "rows.jsonl"])?;
    Ok(table)
}

#[derive(Debug, Clone, Default)]
pub struct RenderOpts {
    pub scan: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub out: PathBuf,
    /// Samples per strip when rendering a scan.
    pub segment: usize,
    /// Render at most this many windows or strips.
    pub limit: Option<usize>,
    /// With a scan: render the window starting at this tile index once per filling method.
    pub filling_comparison: Option<usize>,
    pub abnormal_threshold: u16,
}

/// Writes PNGs and returns their file names.
pub fn cmd_render(opts: &RenderOpts) -> CliResult<Vec<String>> {
    let mut written = Vec::new();
    match (&opts.scan, &opts.dataset) {
        (Some(scan_path), None) => {
            let scan = read_scan(scan_path)?;
            let _lock = OutputLock::acquire(&opts.out)?;
            if let Some(tile) = opts.filling_comparison {
                let start = tile * WINDOW;
                if start + WINDOW > scan.samples() {
                    return Err(CliError::Usage(format!("tile {tile} is past the end of the scan")));
                }
                let raw = WindowImage::from_scan(&scan, start, opts.abnormal_threshold);
                let name = format!("tile{tile:06}_raw.png");
                render::render_window(&raw, &opts.out.join(&name))?;
                written.push(name);
                for method in FillingMethod::ALL {
                    let img = normalize(&fill(&raw, method), method, &NormalizationScope::PerImage)?;
                    let name = format!("tile{tile:06}_filling{}.png", method.number());
                    render::render_window(&img, &opts.out.join(&name))?;
                    written.push(name);
                }
            } else {
                let seg = opts.segment.max(1);
                let count = scan.samples().div_ceil(seg);
                for i in 0..opts.limit.map_or(count, |l| l.min(count)) {
                    let (s, e) = (i * seg, ((i + 1) * seg).min(scan.samples()));
                    let name = format!("strip{i:05}_{s}-{e}.png");
                    render::render_scan_segment(&scan, s, e, &opts.out.join(&name))?;
                    written.push(name);
                }
            }
        }
        (None, Some(dir)) => {
            let (dataset, _) = store::load_dataset(dir)?;
            let _lock = OutputLock::acquire(&opts.out)?;
            let n = opts.limit.map_or(dataset.len(), |l| l.min(dataset.len()));
            for (i, img) in dataset.images.iter().take(n).enumerate() {
                let name = format!("{i:06}_{}.png", img.label.name());
                render::render_window(img, &opts.out.join(&name))?;
                written.push(name);
            }
        }
        _ => {
            return Err(CliError::Usage(
                "render needs exactly one of --scan or --dataset".into(),
            ))
        }
    }
    Ok(written)
}
