use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scan::{WindowImage, WINDOW};

/// How abnormal cells are replaced before scaling. Serialized as its number 1-5.
///
/// "Column" means one axial position across all 64 sensors, i.e. an image column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum FillingMethod {
    /// Zero, then scale normal cells to [0.5, 1].
    Zero = 1,
    /// Mean of the image's normal cells.
    ImageMean = 2,
    /// Mean of the normal cells in the same column.
    ColumnMean = 3,
    /// Mean of the nearest normal sensor on either side in the same column.
    NeighborMean = 4,
    /// Linear interpolation along the column between the bounding normal sensors.
    ColumnInterp = 5,
}

impl FillingMethod {
    pub const ALL: [FillingMethod; 5] = [
        FillingMethod::Zero,
        FillingMethod::ImageMean,
        FillingMethod::ColumnMean,
        FillingMethod::NeighborMean,
        FillingMethod::ColumnInterp,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for FillingMethod {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        FillingMethod::ALL
            .get((v as usize).wrapping_sub(1))
            .copied()
            .ok_or_else(|| format!("filling method must be 1-5, got {v}"))
    }
}

impl From<FillingMethod> for u8 {
    fn from(m: FillingMethod) -> u8 {
        m.number()
    }
}

/// Min/max used for whole-dataset scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NormalizationScope {
    PerImage,
    WholeDataset { range: Option<DatasetRange> },
}

fn normal_mean(img: &WindowImage) -> Option<f64> {
    let (sum, n) = img
        .pixels
        .iter()
        .zip(&img.abnormal_mask)
        .filter(|(_, &m)| !m)
        .fold((0.0, 0usize), |(s, n), (&v, _)| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Replaces abnormal cells; normal cells are never touched.
/// A fully abnormal image falls back to zero filling for every method.
pub fn fill(image: &WindowImage, method: FillingMethod) -> WindowImage {
    let mut out = image.clone();
    let Some(image_mean) = normal_mean(image) else {
        out.pixels.iter_mut().for_each(|p| *p = 0.0);
        return out;
    };
    let abnormal = |r: usize, c: usize| image.abnormal_mask[r * WINDOW + c];

    for c in 0..WINDOW {
        if !(0..WINDOW).any(|r| abnormal(r, c)) {
            continue;
        }
        let column_normals: Vec<(usize, f64)> = (0..WINDOW)
            .filter(|&r| !abnormal(r, c))
            .map(|r| (r, image.at(r, c)))
            .collect();
        for r in (0..WINDOW).filter(|&r| abnormal(r, c)) {
            let value = match method {
                FillingMethod::Zero => 0.0,
                FillingMethod::ImageMean => image_mean,
                _ if column_normals.is_empty() => image_mean,
                FillingMethod::ColumnMean => {
                    column_normals.iter().map(|&(_, v)| v).sum::<f64>() / column_normals.len() as f64
                }
                FillingMethod::NeighborMean | FillingMethod::ColumnInterp => {
                    let split = column_normals.partition_point(|&(row, _)| row < r);
                    let above = split.checked_sub(1).map(|i| column_normals[i]);
                    let below = column_normals.get(split).copied();
                    match (above, below) {
                        (Some((_, a)), None) => a,
                        (None, Some((_, b))) => b,
                        (Some((ra, a)), Some((rb, b))) => {
                            if method == FillingMethod::NeighborMean {
                                0.5 * (a + b)
                            } else {
                                a + (b - a) * (r - ra) as f64 / (rb - ra) as f64
                            }
                        }
                        (None, None) => unreachable!("column has normal cells"),
                    }
                }
            };
            out.pixels[r * WINDOW + c] = value;
        }
    }
    out
}

fn scaling_cells<'a>(img: &'a WindowImage, method: FillingMethod) -> impl Iterator<Item = f64> + 'a {
    let only_normals = method == FillingMethod::Zero;
    img.pixels
        .iter()
        .zip(&img.abnormal_mask)
        .filter(move |(_, &m)| !(only_normals && m))
        .map(|(&v, _)| v)
}

/// Dataset-wide min/max over filled images: normal cells for method 1, all cells otherwise.
pub fn dataset_range(images: &[WindowImage], method: FillingMethod) -> Option<DatasetRange> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for img in images {
        for v in scaling_cells(img, method) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo <= hi).then_some(DatasetRange { min: lo, max: hi })
}

/// Min-max scaling. Method 1 maps normal cells to [0.5, 1] and leaves abnormal
/// cells at 0; methods 2-5 map every cell to [0, 1]. A degenerate range maps to
/// the lower bound.
pub fn normalize(image: &WindowImage, method: FillingMethod, scope: &NormalizationScope) -> Result<WindowImage> {
    let (lo, hi) = match scope {
        NormalizationScope::PerImage => {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for v in scaling_cells(image, method) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (lo, hi)
        }
        NormalizationScope::WholeDataset { range: Some(r) } if r.min < r.max => (r.min, r.max),
        NormalizationScope::WholeDataset { .. } => {
            return Err(Error::Data(
                "whole-dataset scaling needs a populated range with min < max".into(),
            ))
        }
    };
    let (base, span) = if method == FillingMethod::Zero {
        (0.5, 0.5)
    } else {
        (0.0, 1.0)
    };
    let degenerate = !(hi > lo);
    let mut out = image.clone();
    for (p, &m) in out.pixels.iter_mut().zip(&image.abnormal_mask) {
        if method == FillingMethod::Zero && m {
            *p = 0.0;
        } else if degenerate {
            *p = base;
        } else {
            let t = ((*p - lo) / (hi - lo)).clamp(0.0, 1.0);
            *p = base + span * t;
        }
    }
    Ok(out)
}
