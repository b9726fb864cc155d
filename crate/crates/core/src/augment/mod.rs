//! Class-conditional augmentation used to rebalance the training split.

mod balance;
mod distort;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use balance::{balance, balance_dataset, scaled_targets, AugClass, AugmentPolicy, BalancedSet, ClassPolicy};
pub use distort::DistortionParams;

use crate::rng;
use crate::scan::{WindowImage, WINDOW};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AugmentationKind {
    Rotate90,
    Rotate180,
    Rotate270,
    VerticalFlip,
    HorizontalFlip,
    ElasticTransform,
    GridDistortion,
    OpticalDistortion,
    Transpose,
    RandomRotate90,
}

impl AugmentationKind {
    /// Kinds applied to defect windows, in cycling order.
    pub const DEFECT: [AugmentationKind; 10] = [
        AugmentationKind::Rotate90,
        AugmentationKind::Rotate180,
        AugmentationKind::Rotate270,
        AugmentationKind::VerticalFlip,
        AugmentationKind::HorizontalFlip,
        AugmentationKind::ElasticTransform,
        AugmentationKind::GridDistortion,
        AugmentationKind::OpticalDistortion,
        AugmentationKind::Transpose,
        AugmentationKind::RandomRotate90,
    ];

    /// Weld windows keep their ridge orientation: no quarter turns or transposes.
    pub const WELD: [AugmentationKind; 6] = [
        AugmentationKind::Rotate180,
        AugmentationKind::VerticalFlip,
        AugmentationKind::HorizontalFlip,
        AugmentationKind::ElasticTransform,
        AugmentationKind::GridDistortion,
        AugmentationKind::OpticalDistortion,
    ];

    pub fn turns_sideways(self) -> bool {
        matches!(
            self,
            AugmentationKind::Rotate90
                | AugmentationKind::Rotate270
                | AugmentationKind::Transpose
                | AugmentationKind::RandomRotate90
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            AugmentationKind::Rotate90 => "Rotate90",
            AugmentationKind::Rotate180 => "Rotate180",
            AugmentationKind::Rotate270 => "Rotate270",
            AugmentationKind::VerticalFlip => "VerticalFlip",
            AugmentationKind::HorizontalFlip => "HorizontalFlip",
            AugmentationKind::ElasticTransform => "ElasticTransform",
            AugmentationKind::GridDistortion => "GridDistortion",
            AugmentationKind::OpticalDistortion => "OpticalDistortion",
            AugmentationKind::Transpose => "Transpose",
            AugmentationKind::RandomRotate90 => "RandomRotate90",
        }
    }
}

/// Exact pixel permutation: output cell `(r, c)` is read from `source(r, c)`.
fn permute(image: &WindowImage, source: impl Fn(usize, usize) -> (usize, usize)) -> WindowImage {
    let mut out = image.clone();
    for r in 0..WINDOW {
        for c in 0..WINDOW {
            let (sr, sc) = source(r, c);
            out.pixels[r * WINDOW + c] = image.pixels[sr * WINDOW + sc];
            out.abnormal_mask[r * WINDOW + c] = image.abnormal_mask[sr * WINDOW + sc];
        }
    }
    out
}

const LAST: usize = WINDOW - 1;

/// Counter-clockwise quarter turns.
fn rotate(image: &WindowImage, quarter_turns: u32) -> WindowImage {
    match quarter_turns % 4 {
        0 => image.clone(),
        1 => permute(image, |r, c| (c, LAST - r)),
        2 => permute(image, |r, c| (LAST - r, LAST - c)),
        _ => permute(image, |r, c| (LAST - c, r)),
    }
}

pub fn apply(image: &WindowImage, kind: AugmentationKind, seed: u64) -> WindowImage {
    apply_with(image, kind, seed, &DistortionParams::default())
}

/// Deterministic in `(image, kind, seed, params)`. The label is carried over.
pub fn apply_with(image: &WindowImage, kind: AugmentationKind, seed: u64, params: &DistortionParams) -> WindowImage {
    let mut r = rng::rng(seed);
    match kind {
        AugmentationKind::Rotate90 => rotate(image, 1),
        AugmentationKind::Rotate180 => rotate(image, 2),
        AugmentationKind::Rotate270 => rotate(image, 3),
        AugmentationKind::VerticalFlip => permute(image, |r, c| (LAST - r, c)),
        AugmentationKind::HorizontalFlip => permute(image, |r, c| (r, LAST - c)),
        AugmentationKind::Transpose => permute(image, |r, c| (c, r)),
        AugmentationKind::RandomRotate90 => rotate(image, r.gen_range(0..4)),
        AugmentationKind::ElasticTransform => distort::elastic(image, params, &mut r),
        AugmentationKind::GridDistortion => distort::grid(image, params, &mut r),
        AugmentationKind::OpticalDistortion => distort::optical(image, params, &mut r),
    }
}
