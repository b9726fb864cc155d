use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scan::{Label, LabeledDataset, Split};

/// Per-class share of images held out for validation.
///
/// With floor rounding the defaults reproduce the reference split exactly:
/// 11690 healthy -> 584, 711 defect -> 142, 1412 weld -> 282 validation images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationFractions {
    pub healthy: f64,
    pub defect: f64,
    pub weld: f64,
}

impl Default for ValidationFractions {
    fn default() -> Self {
        Self {
            healthy: 0.05,
            defect: 0.2,
            weld: 0.2,
        }
    }
}

impl ValidationFractions {
    pub fn uniform(f: f64) -> Self {
        Self {
            healthy: f,
            defect: f,
            weld: f,
        }
    }

    pub fn get(&self, label: Label) -> f64 {
        match label {
            Label::Healthy => self.healthy,
            Label::Defect => self.defect,
            Label::Weld => self.weld,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for label in Label::ALL {
            let f = self.get(label);
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!(
                    "validation fraction for {} must be in (0, 1), got {f}",
                    label.name()
                )));
            }
        }
        Ok(())
    }
}

/// Seeded per-class split. Each class keeps `floor(n * fraction)` validation
/// images (at least one, at most n - 1); dataset order is preserved.
pub fn split(mut dataset: LabeledDataset, fractions: &ValidationFractions, seed: u64) -> Result<LabeledDataset> {
    fractions.validate()?;
    dataset.splits = vec![Split::Train; dataset.images.len()];
    for label in Label::ALL {
        let mut members: Vec<usize> = dataset
            .images
            .iter()
            .enumerate()
            .filter(|(_, img)| img.label == label)
            .map(|(i, _)| i)
            .collect();
        let n = members.len();
        if n < 2 {
            return Err(Error::Data(format!(
                "class {} has {n} image(s); at least 2 are needed to split",
                label.name()
            )));
        }
        // The epsilon keeps exact ratios such as 584/11690 from flooring one short.
        let n_val = ((n as f64 * fractions.get(label) + 1e-9).floor() as usize).clamp(1, n - 1);
        let mut r = rng::rng(rng::derive_seed(seed, &[label.index() as u64]));
        rng::shuffle(&mut r, &mut members);
        for &i in &members[..n_val] {
            dataset.splits[i] = Split::Validation;
        }
    }
    Ok(dataset)
}

/// Keeps at most `limit` healthy images, chosen with a seeded shuffle; order is preserved.
pub fn subsample_healthy(dataset: LabeledDataset, limit: usize, seed: u64) -> LabeledDataset {
    let healthy: Vec<usize> = dataset
        .images
        .iter()
        .enumerate()
        .filter(|(_, img)| img.label == Label::Healthy)
        .map(|(i, _)| i)
        .collect();
    if healthy.len() <= limit {
        return dataset;
    }
    let mut chosen = healthy;
    let mut r = rng::rng(rng::derive_seed(seed, &[u64::MAX]));
    rng::shuffle(&mut r, &mut chosen);
    let mut keep = vec![true; dataset.images.len()];
    for &i in &chosen[limit..] {
        keep[i] = false;
    }
    let (images, splits) = dataset
        .images
        .into_iter()
        .zip(dataset.splits)
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(pair, _)| pair)
        .unzip();
    LabeledDataset { images, splits }
}
