use serde::{Deserialize, Serialize};

use super::arch::{ArchId, Task};
use super::train::{TrainConfig, Trainer};
use crate::augment::{balance_dataset, AugmentPolicy};
use crate::error::{Error, Result};
use crate::preprocess::{self, FillingMethod, PreprocessConfig, ScopeKind};
use crate::scan::{AnnotationReport, SensorScan, Split};

/// Cells are enumerated arch → centering → scope → filling, filling varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationGrid {
    pub archs: Vec<ArchId>,
    pub fillings: Vec<FillingMethod>,
    pub scopes: Vec<ScopeKind>,
    pub centering: Vec<bool>,
}

impl Default for AblationGrid {
    fn default() -> Self {
        Self {
            archs: vec![ArchId::Cnn5],
            fillings: FillingMethod::ALL.to_vec(),
            scopes: vec![ScopeKind::PerImage],
            centering: vec![true],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationCell {
    pub arch: ArchId,
    pub filling: FillingMethod,
    pub scope: ScopeKind,
    pub centering: bool,
}

impl AblationGrid {
    pub fn cells(&self) -> Vec<AblationCell> {
        let mut out = Vec::new();
        for &arch in &self.archs {
            for &centering in &self.centering {
                for &scope in &self.scopes {
                    for &filling in &self.fillings {
                        out.push(AblationCell {
                            arch,
                            filling,
                            scope,
                            centering,
                        });
                    }
                }
            }
        }
        out
    }

    /// Row label such as `CNN-5 (1) (image)`; centering is named only when the grid varies it.
    pub fn label(&self, cell: &AblationCell) -> String {
        let scope = match cell.scope {
            ScopeKind::PerImage => "image",
            ScopeKind::WholeDataset => "whole",
        };
        let mut s = format!("{} ({}) ({scope})", cell.arch.display_name(), cell.filling.number());
        if self.centering.len() > 1 {
            s.push_str(if cell.centering { " (centered)" } else { " (uncentered)" });
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    /// Percentages, one per class.
    pub recalls: Vec<f64>,
    pub average: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub task: Task,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    /// `Method,healthy,...,Average` with two-decimal percentages.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("Method");
        for name in self.task.class_names() {
            out.push(',');
            out.push_str(name);
        }
        out.push_str(",Average\n");
        for row in &self.rows {
            out.push_str(&row.method);
            for r in &row.recalls {
                out.push_str(&format!(",{r:.2}"));
            }
            out.push_str(&format!(",{:.2}\n", row.average));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationBase {
    pub preprocess: PreprocessConfig,
    pub train: TrainConfig,
    /// Seed of the augmentation policy; `None` trains on the unaugmented split.
    pub augment_seed: Option<u64>,
}

impl Default for AblationBase {
    fn default() -> Self {
        Self {
            preprocess: PreprocessConfig::default(),
            train: TrainConfig::default(),
            augment_seed: Some(0),
        }
    }
}

/// Trains one model per grid cell, all with the base seeds, and tabulates
/// validation recalls. `on_row` sees each row as soon as it is finished.
pub fn run_ablation(
    scan: &SensorScan,
    report: &AnnotationReport,
    grid: &AblationGrid,
    base: &AblationBase,
    mut on_row: impl FnMut(&AblationCell, &ComparisonRow) -> Result<()>,
) -> Result<ComparisonTable> {
    let mut rows = Vec::new();
    for cell in grid.cells() {
        let pre = PreprocessConfig {
            filling: cell.filling,
            scope: cell.scope,
            centering: cell.centering,
            ..base.preprocess.clone()
        };
        let dataset = preprocess::run(scan, report, &pre)?.dataset;
        let dataset = match base.augment_seed {
            Some(seed) => balance_dataset(&dataset, &AugmentPolicy::scaled_for(&dataset, seed))?.0,
            None => dataset,
        };
        let mut trainer = Trainer::new(TrainConfig {
            arch: cell.arch,
            ..base.train.clone()
        })?;
        trainer.fit(&dataset, |_, _| Ok(()))?;
        let (_, cm) = trainer.evaluate(&dataset, Split::Validation)?;
        let row = ComparisonRow {
            method: grid.label(&cell),
            recalls: cm
                .recalls()
                .map_err(|e| Error::Data(format!("{}: {e}", grid.label(&cell))))?
                .iter()
                .map(|r| r * 100.0)
                .collect(),
            average: cm.average_recall()? * 100.0,
        };
        on_row(&cell, &row)?;
        rows.push(row);
    }
    Ok(ComparisonTable {
        task: base.train.task,
        rows,
    })
}
