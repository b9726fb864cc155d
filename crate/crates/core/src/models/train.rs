use serde::{Deserialize, Serialize};

use super::arch::{build, decide, scores_from_output, ArchConfig, ArchId, Model, Task};
use super::metrics::ConfusionMatrix;
use crate::error::{Error, Result};
use crate::nn::{bce_loss, cross_entropy_loss, Adam, Checkpoint, Mode, PlateauScheduler, Tensor};
use crate::rng;
use crate::scan::{LabeledDataset, Split, WindowImage, WINDOW, WINDOW_CELLS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub factor: f64,
    pub min_lr: f64,
    pub threshold: f64,
    /// Counted in optimizer steps.
    pub patience: u64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            factor: 0.5,
            min_lr: 1e-4,
            threshold: 1e-4,
            patience: 484,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub arch: ArchId,
    pub task: Task,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub scheduler: SchedulerConfig,
    pub model: ArchConfig,
    pub seed: u64,
    /// After each epoch, re-estimate batch-norm statistics over the train split with
    /// dropout off. Off by default; see `Network::refresh_batch_norm`.
    pub bn_refresh: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: ArchId::Cnn5,
            task: Task::Multiclass,
            epochs: 12,
            batch_size: 64,
            lr: 1e-3,
            scheduler: SchedulerConfig::default(),
            model: ArchConfig::default(),
            seed: 0,
            bn_refresh: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.lr)));
        }
        let s = &self.scheduler;
        if !(s.factor > 0.0 && s.factor < 1.0) || s.min_lr <= 0.0 || s.min_lr > self.lr || s.threshold < 0.0 {
            return Err(Error::Config("invalid scheduler settings".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub recalls: Vec<f64>,
    pub average_recall: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Progress {
    epoch: usize,
    held_val_loss: Option<f64>,
    config: TrainConfig,
    history: Vec<EpochRecord>,
}

/// Stacks window pixels into a `(N, 1, 64, 64)` tensor.
pub fn batch_tensor(images: &[&WindowImage]) -> Tensor {
    let mut data = Vec::with_capacity(images.len() * WINDOW_CELLS);
    for img in images {
        data.extend_from_slice(&img.pixels);
    }
    Tensor::new(vec![images.len(), 1, WINDOW, WINDOW], data).expect("window pixels")
}

/// Mean loss over a batch and the gradient with respect to the network output.
fn loss_and_grad(task: Task, out: &Tensor, targets: &[usize]) -> Result<(f64, Tensor)> {
    match task {
        Task::Binary => {
            let y: Vec<f64> = targets.iter().map(|&t| t as f64).collect();
            let (loss, g) = bce_loss(out.data(), &y)?;
            Ok((loss, Tensor::new(out.shape().to_vec(), g)?))
        }
        Task::Multiclass => cross_entropy_loss(out, targets),
    }
}

/// Cuts `order` into batches of `size`; a trailing batch of one joins the previous
/// batch so that batch statistics are always defined.
pub fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().map(|b| b.len()) == Some(1) {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().unwrap() = &order[start..];
    }
    out
}

/// Per-sample predicted class and scores, computed in eval mode in batches of `batch`.
pub fn predict(model: &Model, images: &[&WindowImage], batch: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(batch.max(1)) {
        for s in model.scores(&batch_tensor(chunk))? {
            out.push((decide(model.task, &s), s));
        }
    }
    Ok(out)
}

/// Eval-mode mean loss and confusion matrix over `images`.
pub fn evaluate(model: &Model, images: &[&WindowImage], batch: usize) -> Result<(f64, ConfusionMatrix)> {
    if images.is_empty() {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    let mut cm = ConfusionMatrix::new(model.task.num_classes());
    let mut loss = 0.0;
    for chunk in images.chunks(batch.max(1)) {
        let targets: Vec<usize> = chunk.iter().map(|i| model.task.target(i.label)).collect();
        let out = model.net.predict(&batch_tensor(chunk))?;
        loss += loss_and_grad(model.task, &out, &targets)?.0 * chunk.len() as f64;
        for (s, &t) in scores_from_output(model.task, &out)?.iter().zip(&targets) {
            cm.add(t, decide(model.task, s))?;
        }
    }
    Ok((loss / images.len() as f64, cm))
}

/// Owns a model plus optimizer and scheduler state across epochs.
pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model,
    adam: Adam,
    scheduler: PlateauScheduler,
    epoch: usize,
    held_val_loss: Option<f64>,
    pub history: Vec<EpochRecord>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = build(config.arch, config.task, &config.model, config.seed)?;
        let s = &config.scheduler;
        Ok(Self {
            adam: Adam::new(config.lr),
            scheduler: PlateauScheduler::new(config.lr, s.factor, s.min_lr, s.threshold, s.patience),
            model,
            epoch: 0,
            held_val_loss: None,
            history: Vec::new(),
            config,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn lr(&self) -> f64 {
        self.scheduler.lr
    }

    fn split_views<'a>(&self, data: &'a LabeledDataset) -> Result<(Vec<&'a WindowImage>, Vec<&'a WindowImage>)> {
        let pick = |s: Split| -> Vec<&WindowImage> {
            data.images
                .iter()
                .zip(&data.splits)
                .filter(|(_, sp)| **sp == s)
                .map(|(i, _)| i)
                .collect()
        };
        let (train, val) = (pick(Split::Train), pick(Split::Validation));
        if train.is_empty() || val.is_empty() {
            return Err(Error::Data(
                "training needs non-empty train and validation splits".into(),
            ));
        }
        let k = self.config.task.num_classes();
        for class in 0..k {
            if !train.iter().any(|i| self.config.task.target(i.label) == class) {
                return Err(Error::Data(format!(
                    "class {} is absent from the train split",
                    self.config.task.class_names()[class]
                )));
            }
        }
        Ok((train, val))
    }

    /// One optimizer step on `images`; returns the batch loss.
    pub fn step(&mut self, images: &[&WindowImage]) -> Result<f64> {
        let task = self.config.task;
        let targets: Vec<usize> = images.iter().map(|i| task.target(i.label)).collect();
        let net = &mut self.model.net;
        net.zero_grad();
        let out = net.forward(&batch_tensor(images), Mode::Train)?;
        let (loss, grad) = loss_and_grad(task, &out, &targets)?;
        net.backward(grad)?;
        self.adam.lr = self.scheduler.lr;
        self.adam.step(&mut net.params_mut())?;
        if let Some(metric) = self.held_val_loss {
            self.scheduler.step(metric);
        }
        Ok(loss)
    }

    /// Runs the next epoch: seeded shuffle, mini-batch updates, then a validation pass
    /// whose loss is held as the scheduler metric until the following epoch ends.
    pub fn train_epoch(&mut self, data: &LabeledDataset) -> Result<EpochRecord> {
        let (train, val) = self.split_views(data)?;
        if self.held_val_loss.is_none() {
            self.held_val_loss = Some(evaluate(&self.model, &val, self.config.batch_size)?.0);
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut shuffler = rng::rng(rng::derive_seed(self.config.seed, &[2, self.epoch as u64]));
        rng::shuffle(&mut shuffler, &mut order);
        let mut total = 0.0;
        for batch in batches(&order, self.config.batch_size) {
            let imgs: Vec<&WindowImage> = batch.iter().map(|&i| train[i]).collect();
            total += self.step(&imgs)? * imgs.len() as f64;
        }
        if self.config.bn_refresh {
            let order: Vec<usize> = (0..train.len()).collect();
            let inputs = batches(&order, self.config.batch_size)
                .into_iter()
                .map(|b| batch_tensor(&b.iter().map(|&i| train[i]).collect::<Vec<_>>()));
            self.model.net.refresh_batch_norm(inputs)?;
        }
        let (val_loss, cm) = evaluate(&self.model, &val, self.config.batch_size)?;
        self.held_val_loss = Some(val_loss);
        self.epoch += 1;
        let record = EpochRecord {
            epoch: self.epoch,
            train_loss: total / train.len() as f64,
            val_loss,
            recalls: (0..cm.classes()).map(|k| cm.recall(k).unwrap_or(f64::NAN)).collect(),
            average_recall: cm.average_recall()?,
            lr: self.scheduler.lr,
        };
        self.history.push(record.clone());
        Ok(record)
    }

    /// Trains until `config.epochs` are done, calling `after_epoch` after each one.
    pub fn fit(
        &mut self,
        data: &LabeledDataset,
        mut after_epoch: impl FnMut(&Trainer, &EpochRecord) -> Result<()>,
    ) -> Result<()> {
        while self.epoch < self.config.epochs {
            let record = self.train_epoch(data)?;
            after_epoch(self, &record)?;
        }
        Ok(())
    }

    pub fn evaluate(&self, data: &LabeledDataset, split: Split) -> Result<(f64, ConfusionMatrix)> {
        let imgs: Vec<&WindowImage> = data
            .images
            .iter()
            .zip(&data.splits)
            .filter(|(_, s)| **s == split)
            .map(|(i, _)| i)
            .collect();
        evaluate(&self.model, &imgs, self.config.batch_size)
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let progress = Progress {
            epoch: self.epoch,
            held_val_loss: self.held_val_loss,
            config: self.config.clone(),
            history: self.history.clone(),
        };
        Ok(Checkpoint {
            arch: self.config.arch.id().to_string(),
            num_classes: self.config.task.num_classes() as u32,
            layers: self.model.net.state(),
            adam: self.adam.clone(),
            scheduler: self.scheduler.clone(),
            rng: self.model.net.rng_state(),
            progress: serde_json::to_vec(&progress)?,
        })
    }

    /// Restores a trainer exactly as it was when `ck` was taken.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let progress: Progress = serde_json::from_slice(&ck.progress)
            .map_err(|e| Error::format("checkpoint", format!("progress section: {e}")))?;
        let config = progress.config;
        if ck.arch != config.arch.id() || ck.num_classes as usize != config.task.num_classes() {
            return Err(Error::format(
                "checkpoint",
                "header disagrees with its stored configuration",
            ));
        }
        let mut trainer = Trainer::new(config)?;
        trainer.model.net.load_state(&ck.layers)?;
        trainer.model.net.set_rng_state(&ck.rng);
        trainer.adam = ck.adam.clone();
        trainer.scheduler = ck.scheduler.clone();
        trainer.epoch = progress.epoch;
        trainer.held_val_loss = progress.held_val_loss;
        trainer.history = progress.history;
        Ok(trainer)
    }
}

/// Reads a checkpoint's architecture without rebuilding the model.
pub fn checkpoint_arch(ck: &Checkpoint) -> Result<(ArchId, Task)> {
    Ok((ck.arch.parse()?, Task::from_num_classes(ck.num_classes as usize)?))
}
