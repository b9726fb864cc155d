//! The classifiers, their training loop and recall-based evaluation.

mod ablation;
mod arch;
mod metrics;
mod train;

pub use ablation::{run_ablation, AblationBase, AblationCell, AblationGrid, ComparisonRow, ComparisonTable};
pub use arch::{build, decide, scores_from_output, ArchConfig, ArchId, Model, Task};
pub use metrics::{weighted_recall, ConfusionMatrix};
pub use train::{
    batch_tensor, batches, checkpoint_arch, evaluate, predict, EpochRecord, SchedulerConfig, TrainConfig, Trainer,
};
