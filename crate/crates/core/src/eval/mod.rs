//! Cross-validation, metrics, train-size ablation and trend fitting.

mod ablation;
mod cv;
mod metrics;
mod powerlaw;
pub mod report;

pub use ablation::{run_ablation, AblationOutcome, AblationPoint, ABLATION_RATIOS};
pub use cv::{
    build_partitions, fit_full, fold_splits, iqr, prepare_recordings, run_cross_validation, with_workers,
    ClassSummary, CvConfig, CvReport, DatasetSelection, FittedModel, FoldReport, PartitionSet, RatePlan,
    TrainedModel,
};
pub use metrics::{class_metrics, ClassMetrics, ConfusionMatrix, Metrics};
pub use powerlaw::{fit_power_law, PowerLawFit};
