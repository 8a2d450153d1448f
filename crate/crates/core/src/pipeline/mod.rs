//! From recordings to leakage-free, balanced, normalized model inputs.
//!
//! Recordings are cut into fixed-length partitions, which are the unit of
//! fold assignment, oversampling and decimation. Samples are shorter
//! windows slid over a partition; they inherit the partition's fold.

mod folds;
mod normalize;
mod partition;
mod rebalance;

pub use folds::{split_kfold, write_fold_manifest, FoldSplit};
pub use normalize::{apply_normalization, fit_normalization, NormalizationStats};
pub use partition::{
    extract_samples, partition_all, partition_recording, resample_recording, sample_offsets,
    Partition, Sample,
};
pub use rebalance::{decimate_train, group_by_class, oversample};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seconds per partition.
    pub partition_duration: f64,
    /// Seconds per model-input sample.
    pub sample_duration: f64,
    /// Seconds between consecutive sample starts within a partition.
    pub sample_stride: f64,
    pub folds: usize,
    /// Balance classes in the training subset by duplicating partitions.
    pub oversample: bool,
    /// Balance classes in the test subset as well.
    pub oversample_test: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            partition_duration: 5.0,
            sample_duration: 1.7,
            sample_stride: 1.0 / 6.5,
            folds: 5,
            oversample: true,
            oversample_test: true,
        }
    }
}

impl PipelineConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.partition_duration > 0.0) {
            out.push("pipeline.partition_duration must be positive".to_string());
        }
        if !(self.sample_duration > 0.0) {
            out.push("pipeline.sample_duration must be positive".to_string());
        }
        if self.sample_duration > self.partition_duration {
            out.push("pipeline.sample_duration must not exceed partition_duration".to_string());
        }
        if !(self.sample_stride > 0.0) {
            out.push("pipeline.sample_stride must be positive".to_string());
        }
        if self.folds < 2 {
            out.push("pipeline.folds must be at least 2".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p.join("; ")))
        }
    }
}
