//! Scan-to-dataset chain: abnormal-value masking, report alignment,
//! non-overlapping windowing, optional centering on events, labeling,
//! gap filling, min-max normalization and the train/validation split.

mod align;
mod fill;
mod split;
pub mod store;
mod window;

use serde::{Deserialize, Serialize};

pub use align::{align_report, weld_peaks, MATCH_TOLERANCE_SAMPLES};
pub use fill::{dataset_range, fill, normalize, DatasetRange, FillingMethod, NormalizationScope};
pub use split::{split, subsample_healthy, ValidationFractions};
pub use window::{center_window, label_windows, mark_abnormal, window};

use crate::error::{Error, Result};
use crate::scan::{AnnotationKind, AnnotationReport, LabeledDataset, SensorScan, WINDOW};

pub const DEFAULT_ABNORMAL_THRESHOLD: u16 = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeKind {
    PerImage,
    WholeDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub abnormal_threshold: u16,
    pub window_size: usize,
    pub filling: FillingMethod,
    pub scope: ScopeKind,
    pub centering: bool,
    pub center_search_radius: usize,
    pub validation_fractions: ValidationFractions,
    /// Keep at most this many healthy windows (seeded choice, before the split).
    pub healthy_limit: Option<usize>,
    pub seed: u64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            abnormal_threshold: DEFAULT_ABNORMAL_THRESHOLD,
            window_size: WINDOW,
            filling: FillingMethod::Zero,
            scope: ScopeKind::PerImage,
            centering: true,
            center_search_radius: 32,
            validation_fractions: ValidationFractions::default(),
            healthy_limit: None,
            seed: 0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size != WINDOW {
            return Err(Error::Config(format!("window_size must be {WINDOW}")));
        }
        if self.abnormal_threshold == 0 || self.abnormal_threshold >= 4095 {
            return Err(Error::Config("abnormal_threshold must be in (0, 4095)".into()));
        }
        self.validation_fractions.validate()
    }
}

#[derive(Debug, Clone)]
pub struct PreprocessOutput {
    pub dataset: LabeledDataset,
    pub aligned: AnnotationReport,
    pub range: Option<DatasetRange>,
    /// Event windows that had to stay uncentered because they sat too close to a scan edge.
    pub uncentered: usize,
}

/// Runs the whole chain on one scan and its delivered report.
pub fn run(scan: &SensorScan, report: &AnnotationReport, config: &PreprocessConfig) -> Result<PreprocessOutput> {
    config.validate()?;
    let aligned = align_report(scan, report)?;
    let tiles = window(scan, config.abnormal_threshold);
    let mut labeled = label_windows(tiles, &aligned, scan.axial_step_mm);

    let mut uncentered = 0;
    if config.centering {
        let indexed: Vec<(i64, AnnotationKind, f64)> = aligned
            .annotations()
            .iter()
            .map(|a| (scan.sample_index(a.coordinate_mm), a.kind, a.coordinate_mm))
            .collect();
        for img in labeled.images.iter_mut() {
            let (start, end) = (img.source_range.0 as i64, img.source_range.1 as i64);
            let inside = || indexed.iter().filter(|(i, _, _)| (start..end).contains(i));
            let anchor = inside()
                .find(|(_, k, _)| *k == AnnotationKind::Defect)
                .or_else(|| inside().find(|(_, k, _)| *k == AnnotationKind::Weld));
            let Some(&(_, _, coordinate)) = anchor else { continue };
            match center_window(scan, coordinate, config.center_search_radius, config.abnormal_threshold) {
                Ok(mut centered) => {
                    centered.label = img.label;
                    *img = centered;
                }
                Err(_) => uncentered += 1,
            }
        }
    }

    if let Some(limit) = config.healthy_limit {
        labeled = subsample_healthy(labeled, limit, config.seed);
    }
    let mut dataset = split(labeled, &config.validation_fractions, config.seed)?;

    for img in dataset.images.iter_mut() {
        *img = fill(img, config.filling);
    }
    let (scope, range) = match config.scope {
        ScopeKind::PerImage => (NormalizationScope::PerImage, None),
        ScopeKind::WholeDataset => {
            let range = dataset_range(&dataset.images, config.filling);
            (NormalizationScope::WholeDataset { range }, range)
        }
    };
    for img in dataset.images.iter_mut() {
        *img = normalize(img, config.filling, &scope)?;
    }

    Ok(PreprocessOutput {
        dataset,
        aligned,
        range,
        uncentered,
    })
}
