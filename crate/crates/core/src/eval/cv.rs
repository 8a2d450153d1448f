//! Stratified k-fold evaluation of either classifier.
//!
//! Partitions are assigned to folds once. Each fold then decimates and
//! oversamples its training partitions, cuts samples, fits normalization
//! on the training samples only, trains, and scores the held-out
//! partitions. Test metrics are reported both on the raw test partitions
//! and on the oversampled test set; the latter reuses the raw predictions
//! weighted by how often each partition was drawn.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{class_metrics, ConfusionMatrix, Metrics};
use crate::dsp::{assemble_input, MultiChannelSpectrogram, StftConfig};
use crate::error::{Error, Result};
use crate::models::{
    CnnClassifier, CnnConfig, CnnShape, MambaClassifier, MambaConfig, MambaShape, ModelKind, SequencePair,
};
use crate::nn::{self, Checkpoint, EpochRecord, Model, TrainConfig, TrainItem};
use crate::pipeline::{
    apply_normalization, decimate_train, extract_samples, fit_normalization, group_by_class, oversample,
    partition_all, resample_recording, split_kfold, FoldSplit, NormalizationStats, Partition, PipelineConfig, Sample,
};
use crate::seed;
use crate::signal::{quantile_sorted, DatasetTag, LabelSpace, Recording};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSelection {
    Vulpi,
    Borealtc,
    Combined,
}

impl DatasetSelection {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetSelection::Vulpi => "vulpi",
            DatasetSelection::Borealtc => "borealtc",
            DatasetSelection::Combined => "combined",
        }
    }

    pub fn label_space(self) -> LabelSpace {
        match self {
            DatasetSelection::Vulpi => LabelSpace::vulpi(),
            DatasetSelection::Borealtc => LabelSpace::borealtc(),
            DatasetSelection::Combined => LabelSpace::combined(),
        }
    }

    pub fn includes(self, tag: DatasetTag) -> bool {
        match self {
            DatasetSelection::Vulpi => tag == DatasetTag::Vulpi,
            DatasetSelection::Borealtc => tag == DatasetTag::Borealtc,
            DatasetSelection::Combined => matches!(tag, DatasetTag::Vulpi | DatasetTag::Borealtc),
        }
    }

    /// Recordings belonging to this selection.
    pub fn select(self, recs: &[Recording]) -> Vec<Recording> {
        recs.iter().filter(|r| self.includes(r.dataset)).cloned().collect()
    }
}

impl std::fmt::Display for DatasetSelection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DatasetSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vulpi" => Ok(DatasetSelection::Vulpi),
            "borealtc" => Ok(DatasetSelection::Borealtc),
            "combined" => Ok(DatasetSelection::Combined),
            other => Err(Error::Config(format!("unknown dataset `{other}` (expected vulpi, borealtc or combined)"))),
        }
    }
}

/// Everything a cross-validation run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    /// Root of every derived seed.
    pub seed: u64,
    pub pipeline: PipelineConfig,
    pub stft: StftConfig,
    pub cnn: CnnConfig,
    pub mamba: MambaConfig,
    pub train: TrainConfig,
    /// Worker threads for folds; 0 uses every core.
    pub workers: usize,
    /// Fraction of training partitions kept per class.
    pub decimation: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            seed: 0,
            pipeline: PipelineConfig::default(),
            stft: StftConfig::default(),
            cnn: CnnConfig::default(),
            mamba: MambaConfig::default(),
            train: TrainConfig::default(),
            workers: 0,
            decimation: 1.0,
        }
    }
}

impl CvConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.pipeline.problems();
        out.extend(self.stft.problems());
        out.extend(self.cnn.problems());
        out.extend(self.mamba.problems());
        out.extend(self.train.problems());
        if !(self.decimation > 0.0 && self.decimation <= 1.0) {
            out.push(format!("decimation must lie in (0, 1], got {}", self.decimation));
        }
        out
    }
}

/// Sampling rates the partitions were cut at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePlan {
    /// `true` when channels were converted to a common rate per group.
    pub resampled: bool,
    /// Distinct `(imu, wheel)` rates present after preparation.
    pub rates: Vec<(f64, f64)>,
}

/// Puts every channel on a uniform grid. The CNN needs one spectrogram
/// geometry, so each group goes to its lowest rate across recordings;
/// the sequence model keeps every recording's own rates.
pub fn prepare_recordings(recs: &[Recording], kind: ModelKind) -> Result<(Vec<Recording>, RatePlan)> {
    if recs.is_empty() {
        return Err(Error::Empty("no recordings selected".into()));
    }
    let min_imu = recs.iter().map(|r| r.imu.rate).fold(f64::INFINITY, f64::min);
    let min_wheel = recs.iter().map(|r| r.wheel.rate).fold(f64::INFINITY, f64::min);
    let prepared: Vec<Recording> = recs
        .par_iter()
        .map(|r| match kind {
            ModelKind::Cnn => resample_recording(r, min_imu, min_wheel),
            ModelKind::Mamba => resample_recording(r, r.imu.rate, r.wheel.rate),
        })
        .collect::<Result<_>>()?;
    let mut rates: Vec<(f64, f64)> = Vec::new();
    for r in &prepared {
        if !rates.contains(&(r.imu.rate, r.wheel.rate)) {
            rates.push((r.imu.rate, r.wheel.rate));
        }
    }
    let resampled = kind == ModelKind::Cnn && recs.iter().any(|r| r.imu.rate != min_imu || r.wheel.rate != min_wheel);
    Ok((prepared, RatePlan { resampled, rates }))
}

/// A trained classifier of either kind.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Cnn(CnnClassifier),
    Mamba(MambaClassifier),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Cnn(_) => ModelKind::Cnn,
            TrainedModel::Mamba(_) => ModelKind::Mamba,
        }
    }

    pub fn embedding_len(&self) -> usize {
        match self {
            TrainedModel::Cnn(m) => m.embedding_len(),
            TrainedModel::Mamba(m) => m.embedding_len(),
        }
    }

    fn checkpoint(&self, metadata: serde_json::Value) -> Checkpoint {
        match self {
            TrainedModel::Cnn(m) => Checkpoint::from_model(m, metadata),
            TrainedModel::Mamba(m) => Checkpoint::from_model(m, metadata),
        }
    }
}

/// A trained model with the preprocessing it was trained under.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub model: TrainedModel,
    pub normalization: NormalizationStats,
    pub stft: StftConfig,
    pub classes: Vec<String>,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    normalization: NormalizationStats,
    stft: StftConfig,
    classes: Vec<String>,
    best_epoch: usize,
}

impl FittedModel {
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = CheckpointMeta {
            normalization: self.normalization.clone(),
            stft: self.stft.clone(),
            classes: self.classes.clone(),
            best_epoch: self.best_epoch,
        };
        Ok(self.model.checkpoint(serde_json::to_value(meta)?))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta: CheckpointMeta = serde_json::from_value(ck.metadata.clone())?;
        let kind = ck.architecture.get("kind").and_then(|k| k.as_str()).unwrap_or_default();
        let mut rng = seed::rng(0);
        let model = match kind {
            "cnn" => {
                let shape: CnnShape = serde_json::from_value(ck.architecture["shape"].clone())?;
                let cfg: CnnConfig = serde_json::from_value(ck.architecture["config"].clone())?;
                let mut m = CnnClassifier::new(shape, cfg, &mut rng)?;
                ck.restore_into(&mut m)?;
                TrainedModel::Cnn(m)
            }
            "mamba" => {
                let shape: MambaShape = serde_json::from_value(ck.architecture["shape"].clone())?;
                let cfg: MambaConfig = serde_json::from_value(ck.architecture["config"].clone())?;
                let mut m = MambaClassifier::new(shape, cfg, &mut rng)?;
                ck.restore_into(&mut m)?;
                TrainedModel::Mamba(m)
            }
            other => return Err(Error::Config(format!("unknown model kind `{other}` in checkpoint"))),
        };
        Ok(FittedModel {
            model,
            normalization: meta.normalization,
            stft: meta.stft,
            classes: meta.classes,
            best_epoch: meta.best_epoch,
            history: Vec::new(),
        })
    }

    /// Logits and embeddings of raw (unnormalized) samples.
    pub fn infer(&self, samples: &[Sample], batch_size: usize) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let normalized: Vec<Sample> =
            samples.par_iter().map(|s| apply_normalization(s, &self.normalization)).collect::<Result<_>>()?;
        match &self.model {
            TrainedModel::Cnn(m) => {
                let inputs: Vec<MultiChannelSpectrogram> =
                    normalized.par_iter().map(|s| assemble_input(s, &self.stft)).collect::<Result<_>>()?;
                nn::infer(m, &inputs.iter().collect::<Vec<_>>(), batch_size)
            }
            TrainedModel::Mamba(m) => {
                let inputs: Vec<SequencePair> = normalized.iter().map(SequencePair::from_sample).collect::<Result<_>>()?;
                nn::infer(m, &inputs.iter().collect::<Vec<_>>(), batch_size)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    /// Distinct training partitions after decimation.
    pub train_partitions: usize,
    /// Training samples after oversampling, validation included.
    pub train_samples: usize,
    pub test_partitions: usize,
    /// Confusion matrix on the test set the run reports (oversampled when
    /// test oversampling is on).
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub raw_confusion: ConfusionMatrix,
    pub raw_metrics: Metrics,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub terrain: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub dataset: String,
    pub model: ModelKind,
    pub classes: Vec<String>,
    pub rate_plan: RatePlan,
    pub partitions: usize,
    /// Recordings shorter than one partition.
    pub skipped_recordings: Vec<String>,
    pub folds: Vec<FoldReport>,
    /// Fold means of the per-class metrics.
    pub per_class: Vec<ClassSummary>,
    pub mean_accuracy: f64,
    /// 25th and 75th percentiles of fold accuracy.
    pub accuracy_iqr: (f64, f64),
    pub raw_per_class: Vec<ClassSummary>,
    pub raw_mean_accuracy: f64,
}

fn summarize(classes: &[String], metrics: &[&Metrics]) -> (Vec<ClassSummary>, f64) {
    let n = metrics.len() as f64;
    let per_class = classes
        .iter()
        .enumerate()
        .map(|(k, name)| ClassSummary {
            terrain: name.clone(),
            precision: metrics.iter().map(|m| m.per_class[k].precision).sum::<f64>() / n,
            recall: metrics.iter().map(|m| m.per_class[k].recall).sum::<f64>() / n,
            f1: metrics.iter().map(|m| m.per_class[k].f1).sum::<f64>() / n,
        })
        .collect();
    (per_class, metrics.iter().map(|m| m.accuracy).sum::<f64>() / n)
}

/// `(q25, q75)` with linear interpolation between order statistics.
pub fn iqr(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    (quantile_sorted(&v, 0.25), quantile_sorted(&v, 0.75))
}

/// Partitions cut from prepared recordings, with class indices.
pub struct PartitionSet {
    pub partitions: Vec<Partition>,
    pub labels: Vec<usize>,
    pub skipped: Vec<String>,
}

pub fn build_partitions(recs: &[Recording], space: &LabelSpace, cfg: &PipelineConfig) -> Result<PartitionSet> {
    let (partitions, skipped) = partition_all(recs, cfg)?;
    let labels = partitions
        .iter()
        .map(|p| {
            space.index_of(&p.terrain).ok_or_else(|| Error::UnknownTerrain {
                label: p.terrain.to_string(),
                dataset: p.dataset.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for (k, name) in space.names().iter().enumerate() {
        if !labels.contains(&k) {
            return Err(Error::Insufficient(format!("class `{name}` has no partitions")));
        }
    }
    Ok(PartitionSet { partitions, labels, skipped })
}

/// Adapts the generic training flow to one model kind.
trait Flavor: Sync {
    type M: Model;
    fn input(&self, s: &Sample) -> Result<<Self::M as Model>::Input>;
    fn build(&self, first: &<Self::M as Model>::Input, classes: usize, rng: &mut seed::Rng) -> Result<Self::M>;
    fn wrap(&self, m: Self::M) -> TrainedModel;
}

struct CnnFlavor<'a>(&'a CvConfig);
struct MambaFlavor<'a>(&'a CvConfig);

impl Flavor for CnnFlavor<'_> {
    type M = CnnClassifier;
    fn input(&self, s: &Sample) -> Result<MultiChannelSpectrogram> {
        assemble_input(s, &self.0.stft)
    }
    fn build(&self, first: &MultiChannelSpectrogram, classes: usize, rng: &mut seed::Rng) -> Result<CnnClassifier> {
        let [c, f, t] = first.shape();
        CnnClassifier::new(CnnShape { channels: c, freq_bins: f, frames: t, classes }, self.0.cnn.clone(), rng)
    }
    fn wrap(&self, m: CnnClassifier) -> TrainedModel {
        TrainedModel::Cnn(m)
    }
}

impl Flavor for MambaFlavor<'_> {
    type M = MambaClassifier;
    fn input(&self, s: &Sample) -> Result<SequencePair> {
        SequencePair::from_sample(s)
    }
    fn build(&self, first: &SequencePair, classes: usize, rng: &mut seed::Rng) -> Result<MambaClassifier> {
        let shape = MambaShape { imu_dims: first.imu.shape()[1], wheel_dims: first.wheel.shape()[1], classes };
        MambaClassifier::new(shape, self.0.mamba.clone(), rng)
    }
    fn wrap(&self, m: MambaClassifier) -> TrainedModel {
        TrainedModel::Mamba(m)
    }
}

/// Samples of each distinct partition in `idx`.
fn samples_by_partition(set: &PartitionSet, idx: &[usize], cfg: &PipelineConfig) -> Result<BTreeMap<usize, Vec<Sample>>> {
    let mut unique: Vec<usize> = idx.to_vec();
    unique.sort_unstable();
    unique.dedup();
    let cut: Vec<(usize, Vec<Sample>)> = unique
        .par_iter()
        .map(|&i| Ok((i, extract_samples(&set.partitions[i], cfg)?)))
        .collect::<Result<_>>()?;
    Ok(cut.into_iter().collect())
}

/// Trains on partition indices `train_idx` (duplicates allowed).
fn fit<F: Flavor>(
    flavor: &F,
    set: &PartitionSet,
    train_idx: &[usize],
    classes: &[String],
    cfg: &CvConfig,
    seed_path: &[&str],
) -> Result<(FittedModel, F::M, usize)> {
    let by_part = samples_by_partition(set, train_idx, &cfg.pipeline)?;
    let normalization = fit_normalization(by_part.values().flatten())?;
    let mut inputs: BTreeMap<usize, Vec<<F::M as Model>::Input>> = BTreeMap::new();
    for (&p, samples) in &by_part {
        let converted: Vec<_> = samples
            .par_iter()
            .map(|s| flavor.input(&apply_normalization(s, &normalization)?))
            .collect::<Result<_>>()?;
        inputs.insert(p, converted);
    }
    let mut items = Vec::new();
    for &p in train_idx {
        for input in &inputs[&p] {
            items.push(TrainItem { input: input.clone(), label: set.labels[p], group: p });
        }
    }
    let first = items.first().ok_or_else(|| Error::Empty("training partitions yield no samples".into()))?;
    let mut init_path = seed_path.to_vec();
    init_path.push("init");
    let mut rng = seed::derived_rng(cfg.seed, &init_path);
    let model = flavor.build(&first.input, classes.len(), &mut rng)?;
    let mut train_path = seed_path.to_vec();
    train_path.push("train");
    let train_cfg = TrainConfig { seed: seed::derive(cfg.seed, &train_path), ..cfg.train.clone() };
    let outcome = nn::train(model, &items, &train_cfg)?;
    let fitted = FittedModel {
        model: flavor.wrap(outcome.model.clone()),
        normalization,
        stft: cfg.stft.clone(),
        classes: classes.to_vec(),
        best_epoch: outcome.best_epoch,
        history: outcome.history,
    };
    Ok((fitted, outcome.model, items.len()))
}

fn balanced(set: &PartitionSet, idx: &[usize], classes: usize, rng: &mut seed::Rng) -> Result<Vec<usize>> {
    let by_class = group_by_class(idx, |&i| set.labels[i], classes);
    Ok(oversample(&by_class, rng)?.concat())
}

fn run_fold<F: Flavor>(flavor: &F, set: &PartitionSet, split: &FoldSplit, classes: &[String], cfg: &CvConfig) -> Result<FoldReport> {
    let k = classes.len();
    let fold = split.fold.to_string();
    let path = |stage: &'static str| -> [String; 3] { ["fold".into(), fold.clone(), stage.into()] };
    let rng_for = |stage: &'static str| {
        let p = path(stage);
        seed::derived_rng(cfg.seed, &p.iter().map(String::as_str).collect::<Vec<_>>())
    };

    let by_class = group_by_class(&split.train, |&i| set.labels[i], k);
    if let Some(c) = by_class.iter().position(Vec::is_empty) {
        return Err(Error::Insufficient(format!("fold {fold}: class `{}` missing from training", classes[c])));
    }
    let kept = if cfg.decimation < 1.0 {
        decimate_train(&by_class, cfg.decimation, &mut rng_for("decimate"))?.concat()
    } else {
        by_class.concat()
    };
    let train_idx = if cfg.pipeline.oversample { balanced(set, &kept, k, &mut rng_for("oversample-train"))? } else { kept.clone() };
    let (fitted, model, train_samples) = fit(flavor, set, &train_idx, classes, cfg, &["fold", &fold])?;

    // Score each distinct test partition once.
    let test_samples = samples_by_partition(set, &split.test, &cfg.pipeline)?;
    let mut raw = ConfusionMatrix::new(k);
    let mut per_partition: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (&p, samples) in &test_samples {
        let normalized: Vec<Sample> = samples.iter().map(|s| apply_normalization(s, &fitted.normalization)).collect::<Result<_>>()?;
        let inputs: Vec<_> = normalized.par_iter().map(|s| flavor.input(s)).collect::<Result<_>>()?;
        let preds = nn::predict(&model, &inputs.iter().collect::<Vec<_>>(), cfg.train.batch_size)?;
        for &pred in &preds {
            raw.record(set.labels[p], pred, 1)?;
        }
        per_partition.insert(p, preds);
    }
    let present: Vec<bool> = (0..k).map(|c| split.test.iter().any(|&i| set.labels[i] == c)).collect();
    if let Some(c) = present.iter().position(|p| !p) {
        return Err(Error::Insufficient(format!("fold {fold}: class `{}` missing from test", classes[c])));
    }
    let confusion = if cfg.pipeline.oversample_test {
        let drawn = balanced(set, &split.test, k, &mut rng_for("oversample-test"))?;
        let mut cm = ConfusionMatrix::new(k);
        for p in drawn {
            for &pred in &per_partition[&p] {
                cm.record(set.labels[p], pred, 1)?;
            }
        }
        cm
    } else {
        raw.clone()
    };
    Ok(FoldReport {
        fold: split.fold,
        train_partitions: kept.len(),
        train_samples,
        test_partitions: split.test.len(),
        metrics: class_metrics(&confusion)?,
        confusion,
        raw_metrics: class_metrics(&raw)?,
        raw_confusion: raw,
        best_epoch: fitted.best_epoch,
        history: fitted.history,
    })
}

pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Fold assignment for a partition set.
pub fn fold_splits(set: &PartitionSet, cfg: &CvConfig) -> Result<Vec<FoldSplit>> {
    split_kfold(&set.labels, cfg.pipeline.folds, &mut seed::derived_rng(cfg.seed, &["folds"]))
}

/// Cross-validates `kind` on the given recordings, which must already be
/// restricted to the dataset selection.
pub fn run_cross_validation(recs: &[Recording], space: &LabelSpace, dataset: &str, kind: ModelKind, cfg: &CvConfig) -> Result<CvReport> {
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    with_workers(cfg.workers, || {
        let (prepared, rate_plan) = prepare_recordings(recs, kind)?;
        let set = build_partitions(&prepared, space, &cfg.pipeline)?;
        let splits = fold_splits(&set, cfg)?;
        let classes: Vec<String> = space.names().iter().map(|n| n.to_string()).collect();
        let folds: Vec<FoldReport> = match kind {
            ModelKind::Cnn => {
                let fl = CnnFlavor(cfg);
                splits.par_iter().map(|s| run_fold(&fl, &set, s, &classes, cfg)).collect::<Result<_>>()?
            }
            ModelKind::Mamba => {
                let fl = MambaFlavor(cfg);
                splits.par_iter().map(|s| run_fold(&fl, &set, s, &classes, cfg)).collect::<Result<_>>()?
            }
        };
        let (per_class, mean_accuracy) = summarize(&classes, &folds.iter().map(|f| &f.metrics).collect::<Vec<_>>());
        let (raw_per_class, raw_mean_accuracy) =
            summarize(&classes, &folds.iter().map(|f| &f.raw_metrics).collect::<Vec<_>>());
        let accuracy_iqr = iqr(&folds.iter().map(|f| f.metrics.accuracy).collect::<Vec<_>>());
        Ok(CvReport {
            dataset: dataset.to_string(),
            model: kind,
            classes,
            rate_plan,
            partitions: set.partitions.len(),
            skipped_recordings: set.skipped,
            folds,
            per_class,
            mean_accuracy,
            accuracy_iqr,
            raw_per_class,
            raw_mean_accuracy,
        })
    })?
}

/// Trains one model on every partition (with the usual validation holdout),
/// for checkpoints and embedding extraction.
pub fn fit_full(recs: &[Recording], space: &LabelSpace, kind: ModelKind, cfg: &CvConfig) -> Result<FittedModel> {
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    with_workers(cfg.workers, || {
        let (prepared, _) = prepare_recordings(recs, kind)?;
        let set = build_partitions(&prepared, space, &cfg.pipeline)?;
        let classes: Vec<String> = space.names().iter().map(|n| n.to_string()).collect();
        let all: Vec<usize> = (0..set.partitions.len()).collect();
        let idx = if cfg.pipeline.oversample {
            balanced(&set, &all, classes.len(), &mut seed::derived_rng(cfg.seed, &["full", "oversample-train"]))?
        } else {
            all
        };
        Ok(match kind {
            ModelKind::Cnn => fit(&CnnFlavor(cfg), &set, &idx, &classes, cfg, &["full"])?.0,
            ModelKind::Mamba => fit(&MambaFlavor(cfg), &set, &idx, &classes, cfg, &["full"])?.0,
        })
    })?
}
