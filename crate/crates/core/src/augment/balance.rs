use serde::{Deserialize, Serialize};

use super::{apply_with, AugmentationKind, DistortionParams};
use crate::error::{Error, Result};
use crate::rng;
use crate::scan::{Label, LabeledDataset, Split, WindowImage};

/// Classes that may be augmented. Healthy windows never are.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugClass {
    Defect,
    Weld,
}

impl AugClass {
    pub fn label(self) -> Label {
        match self {
            AugClass::Defect => Label::Defect,
            AugClass::Weld => Label::Weld,
        }
    }
}

/// One entry of a policy file:
/// `{"class": "defect", "kinds": [...], "target_count": 8535, "seed": 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPolicy {
    pub class: AugClass,
    pub kinds: Vec<AugmentationKind>,
    pub target_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub classes: Vec<ClassPolicy>,
    #[serde(default)]
    pub distortion: DistortionParams,
}

impl AugmentPolicy {
    /// Full kind lists for both classes with explicit targets.
    pub fn standard(defect_target: usize, weld_target: usize, seed: u64) -> Self {
        Self {
            classes: vec![
                ClassPolicy {
                    class: AugClass::Defect,
                    kinds: AugmentationKind::DEFECT.to_vec(),
                    target_count: defect_target,
                    seed,
                },
                ClassPolicy {
                    class: AugClass::Weld,
                    kinds: AugmentationKind::WELD.to_vec(),
                    target_count: weld_target,
                    seed,
                },
            ],
            distortion: DistortionParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.classes.iter().enumerate() {
            if p.kinds.is_empty() {
                return Err(Error::Config(format!("policy {i}: no augmentation kinds")));
            }
            if p.class == AugClass::Weld {
                if let Some(k) = p.kinds.iter().find(|k| k.turns_sideways()) {
                    return Err(Error::Config(format!("{} is not allowed for welds", k.name())));
                }
            }
            if self.classes[..i].iter().any(|q| q.class == p.class) {
                return Err(Error::Config(format!("duplicate policy for {:?}", p.class)));
            }
        }
        Ok(())
    }
}

/// Targets that inflate each class by the reference factors: defects x15, welds x10
/// (569 -> 8535 and 1130 -> 11300 on the original training split).
pub fn scaled_targets(defects: usize, welds: usize) -> (usize, usize) {
    (defects * 15, welds * 10)
}

#[derive(Debug, Clone, Default)]
pub struct BalancedSet {
    pub images: Vec<WindowImage>,
    /// For augmented copies: index of the original in the input and the kind applied.
    pub provenance: Vec<Option<(usize, AugmentationKind)>>,
}

/// Appends augmented copies until each policy class reaches its target.
///
/// Originals come first, unchanged and in input order. Copy `j` of the `i`-th
/// original of a class uses `kinds[j % kinds.len()]` and a seed derived from
/// `(policy seed, class, i, j)`; with `need` copies over `n` originals, each
/// original gets `need / n` copies and the first `need % n` get one more.
pub fn balance(train: &[WindowImage], policy: &AugmentPolicy) -> Result<BalancedSet> {
    policy.validate()?;
    let mut out = BalancedSet {
        images: train.to_vec(),
        provenance: vec![None; train.len()],
    };
    for p in &policy.classes {
        let label = p.class.label();
        let originals: Vec<usize> = train
            .iter()
            .enumerate()
            .filter(|(_, img)| img.label == label)
            .map(|(i, _)| i)
            .collect();
        let n = originals.len();
        if p.target_count < n {
            return Err(Error::Config(format!(
                "target {} for {} is below the current count {n}",
                p.target_count,
                label.name()
            )));
        }
        let need = p.target_count - n;
        if need == 0 {
            continue;
        }
        if n == 0 {
            return Err(Error::Data(format!("no {} images to augment", label.name())));
        }
        let jobs: Vec<(usize, usize)> = originals
            .iter()
            .enumerate()
            .flat_map(|(rank, &idx)| {
                let copies = need / n + usize::from(rank < need % n);
                (0..copies).map(move |j| (idx, j))
            })
            .collect();
        let make = |&(idx, j): &(usize, usize)| {
            let kind = p.kinds[j % p.kinds.len()];
            let seed = rng::derive_seed(p.seed, &[label.index() as u64, idx as u64, j as u64]);
            (apply_with(&train[idx], kind, seed, &policy.distortion), (idx, kind))
        };
        #[cfg(feature = "parallel")]
        let made: Vec<_> = {
            use rayon::prelude::*;
            jobs.par_iter().map(make).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let made: Vec<_> = jobs.iter().map(make).collect();
        for (img, prov) in made {
            out.images.push(img);
            out.provenance.push(Some(prov));
        }
    }
    Ok(out)
}

/// Balances the train split of `dataset` and keeps its validation split as is.
/// Returns the new dataset (train first, then validation) and, per image, the
/// name of the augmentation that produced it.
pub fn balance_dataset(
    dataset: &LabeledDataset,
    policy: &AugmentPolicy,
) -> Result<(LabeledDataset, Vec<Option<String>>)> {
    let part = |s: Split| -> Vec<WindowImage> {
        dataset
            .images
            .iter()
            .zip(&dataset.splits)
            .filter(|(_, sp)| **sp == s)
            .map(|(i, _)| i.clone())
            .collect()
    };
    let train = part(Split::Train);
    let val = part(Split::Validation);
    let set = balance(&train, policy)?;
    let mut names: Vec<Option<String>> = set
        .provenance
        .iter()
        .map(|p| p.map(|(_, k)| k.name().to_string()))
        .collect();
    let mut splits = vec![Split::Train; set.images.len()];
    splits.extend(std::iter::repeat_n(Split::Validation, val.len()));
    names.extend(std::iter::repeat_n(None, val.len()));
    let mut images = set.images;
    images.extend(val);
    Ok((LabeledDataset { images, splits }, names))
}

impl AugmentPolicy {
    /// Standard kinds with targets inflated by the default factors from the
    /// current train counts.
    pub fn scaled_for(dataset: &LabeledDataset, seed: u64) -> Self {
        let train = dataset.class_counts().train;
        let (d, w) = scaled_targets(train[Label::Defect.index()], train[Label::Weld.index()]);
        Self::standard(d, w, seed)
    }
}
