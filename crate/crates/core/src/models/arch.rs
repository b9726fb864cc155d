use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, Conv2d, Layer, Linear, Lrn, LrnParams, Network, Tensor};
use crate::rng::{self, Rng64};
use crate::scan::{Label, WINDOW};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArchId {
    #[serde(rename = "CNN5")]
    Cnn5,
    #[serde(rename = "CNN5_LRN")]
    Cnn5Lrn,
    #[serde(rename = "CNN2")]
    Cnn2,
    #[serde(rename = "RayNet")]
    RayNet,
}

impl ArchId {
    pub const ALL: [ArchId; 4] = [ArchId::Cnn5, ArchId::Cnn5Lrn, ArchId::Cnn2, ArchId::RayNet];

    /// Identifier stored in checkpoints and accepted on the command line.
    pub fn id(self) -> &'static str {
        match self {
            ArchId::Cnn5 => "CNN5",
            ArchId::Cnn5Lrn => "CNN5_LRN",
            ArchId::Cnn2 => "CNN2",
            ArchId::RayNet => "RayNet",
        }
    }

    /// Name used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ArchId::Cnn5 => "CNN-5",
            ArchId::Cnn5Lrn => "CNN-5+LRN",
            ArchId::Cnn2 => "CNN-2",
            ArchId::RayNet => "RayNet",
        }
    }

    /// CNN-2 and RayNet are reconstructions from partial layer descriptions.
    pub fn is_reconstruction(self) -> bool {
        matches!(self, ArchId::Cnn2 | ArchId::RayNet)
    }
}

impl fmt::Display for ArchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ArchId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchId::ALL
            .into_iter()
            .find(|a| a.id().eq_ignore_ascii_case(s) || a.display_name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown architecture {s:?}")))
    }
}

/// Binary: healthy vs abnormal (defect or weld). Multiclass: healthy, defect, weld.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binary,
    Multiclass,
}

impl Task {
    pub fn num_classes(self) -> usize {
        match self {
            Task::Binary => 2,
            Task::Multiclass => 3,
        }
    }

    pub fn from_num_classes(k: usize) -> Result<Self> {
        match k {
            2 => Ok(Task::Binary),
            3 => Ok(Task::Multiclass),
            _ => Err(Error::Config(format!("num_classes must be 2 or 3, got {k}"))),
        }
    }

    pub fn target(self, label: Label) -> usize {
        match self {
            Task::Binary => usize::from(label != Label::Healthy),
            Task::Multiclass => label.index(),
        }
    }

    pub fn class_names(self) -> Vec<&'static str> {
        match self {
            Task::Binary => vec!["healthy", "abnormal"],
            Task::Multiclass => vec!["healthy", "defect", "weld"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    /// Output channels of the five CNN-5 convolutions.
    pub cnn5_channels: [usize; 5],
    pub dropout: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            cnn5_channels: [16, 32, 64, 64, 64],
            dropout: 0.33,
        }
    }
}

/// A network together with what it was built for.
#[derive(Debug, Clone)]
pub struct Model {
    pub arch: ArchId,
    pub task: Task,
    pub net: Network,
}

fn head(layers: &mut Vec<Layer>, features: usize, task: Task, rng: &mut Rng64) {
    match task {
        Task::Binary => {
            layers.push(Layer::Linear(Linear::new(features, 1, rng)));
            layers.push(Layer::sigmoid());
        }
        Task::Multiclass => layers.push(Layer::Linear(Linear::new(features, 3, rng))),
    }
}

fn cnn5(lrn: bool, task: Task, cfg: &ArchConfig, rng: &mut Rng64) -> Vec<Layer> {
    let mut layers = Vec::new();
    let mut in_ch = 1;
    let mut side = WINDOW;
    for (i, &out_ch) in cfg.cnn5_channels.iter().enumerate() {
        layers.push(Layer::Conv2d(Conv2d::new(in_ch, out_ch, 5, 2, rng)));
        layers.push(if lrn {
            Layer::Lrn(Lrn::new(LrnParams {
                size: 5,
                alpha: 1e-4,
                beta: 0.75,
                k: 2.0,
            }))
        } else {
            Layer::BatchNorm2d(BatchNorm2d::new(out_ch))
        });
        layers.push(Layer::relu());
        layers.push(Layer::dropout(cfg.dropout));
        if i < 4 {
            layers.push(Layer::maxpool());
            side /= 2;
        }
        in_ch = out_ch;
    }
    layers.push(Layer::flatten());
    head(&mut layers, in_ch * side * side, task, rng);
    layers
}

/// Conv blocks `[conv k×k (same padding) → ReLU → maxpool]`, then one hidden
/// linear layer of 128 units with dropout.
fn plain(channels: &[usize], kernel: usize, task: Task, cfg: &ArchConfig, rng: &mut Rng64) -> Vec<Layer> {
    let mut layers = Vec::new();
    let mut in_ch = 1;
    let mut side = WINDOW;
    for &out_ch in channels {
        layers.push(Layer::Conv2d(Conv2d::new(in_ch, out_ch, kernel, kernel / 2, rng)));
        layers.push(Layer::relu());
        layers.push(Layer::maxpool());
        side /= 2;
        in_ch = out_ch;
    }
    layers.push(Layer::flatten());
    layers.push(Layer::Linear(Linear::new(in_ch * side * side, 128, rng)));
    layers.push(Layer::relu());
    layers.push(Layer::dropout(cfg.dropout));
    head(&mut layers, 128, task, rng);
    layers
}

/// Builds a freshly initialized model. Weights come from `seed`; the dropout
/// stream from a seed derived from it.
pub fn build(arch: ArchId, task: Task, cfg: &ArchConfig, seed: u64) -> Result<Model> {
    if !(0.0..1.0).contains(&cfg.dropout) {
        return Err(Error::Config(format!("dropout {} outside [0, 1)", cfg.dropout)));
    }
    let mut init = rng::rng(rng::derive_seed(seed, &[0]));
    let layers = match arch {
        ArchId::Cnn5 => cnn5(false, task, cfg, &mut init),
        ArchId::Cnn5Lrn => cnn5(true, task, cfg, &mut init),
        ArchId::Cnn2 => plain(&[32, 64], 5, task, cfg, &mut init),
        ArchId::RayNet => plain(&[16, 32, 64], 3, task, cfg, &mut init),
    };
    let model = Model {
        arch,
        task,
        net: Network::new(layers, rng::derive_seed(seed, &[1])),
    };
    model.net.output_shapes(&[1, 1, WINDOW, WINDOW])?;
    Ok(model)
}

impl Model {
    /// Eval-mode per-class scores for a `(N, 1, 64, 64)` batch: `[1 − p, p]` for the
    /// binary head, softmax probabilities otherwise.
    pub fn scores(&self, x: &Tensor) -> Result<Vec<Vec<f64>>> {
        scores_from_output(self.task, &self.net.predict(x)?)
    }

    pub fn layer_report(&self, batch: usize) -> Result<Vec<(&'static str, Vec<usize>)>> {
        self.net.output_shapes(&[batch, 1, WINDOW, WINDOW])
    }
}

/// Per-class scores from raw network output.
pub fn scores_from_output(task: Task, out: &Tensor) -> Result<Vec<Vec<f64>>> {
    Ok(match task {
        Task::Binary => out.data().iter().map(|&p| vec![1.0 - p, p]).collect(),
        Task::Multiclass => crate::nn::ops::softmax(out)?
            .data()
            .chunks_exact(3)
            .map(<[f64]>::to_vec)
            .collect(),
    })
}

/// Class decision from scores: binary predicts 1 when `p ≥ 0.5`, multiclass takes
/// the first maximal score.
pub fn decide(task: Task, scores: &[f64]) -> usize {
    match task {
        Task::Binary => usize::from(scores[1] >= 0.5),
        Task::Multiclass => {
            let mut best = 0;
            for (i, &s) in scores.iter().enumerate() {
                if s > scores[best] {
                    best = i;
                }
            }
            best
        }
    }
}
