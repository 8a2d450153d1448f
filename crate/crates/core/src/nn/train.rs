//! Mini-batch training with a held-out validation subset.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::{BatchStats, Graph, Var};
use super::optim::Adam;
use super::param::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub validation_fraction: f64,
    pub seed: u64,
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            validation_fraction: 0.1,
            seed: 0,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.epochs == 0 {
            out.push("train.epochs must be positive".to_string());
        }
        if self.batch_size == 0 {
            out.push("train.batch_size must be positive".to_string());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            out.push(format!("train.learning_rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            out.push(format!("train.validation_fraction must lie in (0, 1), got {}", self.validation_fraction));
        }
        out
    }
}

/// Graph nodes produced by one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// `[B, K]`.
    pub logits: Var,
    /// `[B, E]`, the input of the classification head.
    pub embedding: Var,
    /// One entry per train-mode batch-norm layer, in layer order.
    pub batch_stats: Vec<BatchStats>,
}

/// A classifier trainable by [`train`].
pub trait Model: Clone + Send + Sync {
    type Input: Clone + Send + Sync;

    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn num_classes(&self) -> usize;
    fn embedding_len(&self) -> usize;

    fn forward(&self, g: &mut Graph, batch: &[&Self::Input], train: bool) -> Result<Forward>;

    /// Hook run after every optimizer step with that step's batch statistics.
    fn after_train_step(&mut self, _stats: &[BatchStats]) {}

    /// Self-describing architecture header for checkpoints.
    fn architecture(&self) -> serde_json::Value;

    /// Non-trainable state saved alongside the parameters.
    fn buffers(&self) -> Vec<(String, Tensor)> {
        Vec::new()
    }

    fn load_buffers(&mut self, buffers: &[(String, Tensor)]) -> Result<()> {
        if buffers.is_empty() {
            Ok(())
        } else {
            Err(Error::Shape(format!("model has no buffers, got {}", buffers.len())))
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainItem<I> {
    pub input: I,
    pub label: usize,
    /// Items sharing a group never straddle the train/validation split.
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    /// Parameters from the epoch with the best validation accuracy.
    pub model: M,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub validation_items: usize,
}

/// Stratified group-level holdout: in each class, `round(fraction · groups)`
/// groups go to validation, always leaving one for training.
pub fn validation_split<I>(items: &[TrainItem<I>], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut groups_by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for it in items {
        let gs = groups_by_class.entry(it.label).or_default();
        if !gs.contains(&it.group) {
            gs.push(it.group);
        }
    }
    let mut rng = seed::derived_rng(seed, &["validation"]);
    let mut val_groups = std::collections::BTreeSet::new();
    for gs in groups_by_class.values_mut() {
        gs.sort_unstable();
        gs.shuffle(&mut rng);
        let take = ((fraction * gs.len() as f64).round() as usize).min(gs.len().saturating_sub(1));
        val_groups.extend(gs.iter().take(take).copied());
    }
    let (mut tr, mut va) = (Vec::new(), Vec::new());
    for (i, it) in items.iter().enumerate() {
        if val_groups.contains(&it.group) {
            va.push(i);
        } else {
            tr.push(i);
        }
    }
    (tr, va)
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Eval-mode logits and embeddings for each input, batched and run in parallel.
pub fn infer<M: Model>(model: &M, inputs: &[&M::Input], batch_size: usize) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let chunks: Vec<Result<Vec<(Vec<f64>, Vec<f64>)>>> = inputs
        .par_chunks(batch_size.max(1))
        .map(|chunk| {
            let mut g = Graph::new();
            let fwd = model.forward(&mut g, chunk, false)?;
            let (k, e) = (model.num_classes(), model.embedding_len());
            let logits = g.value(fwd.logits).data();
            let emb = g.value(fwd.embedding).data();
            Ok((0..chunk.len())
                .map(|i| (logits[i * k..(i + 1) * k].to_vec(), emb[i * e..(i + 1) * e].to_vec()))
                .collect())
        })
        .collect();
    let mut out = Vec::with_capacity(inputs.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

pub fn predict<M: Model>(model: &M, inputs: &[&M::Input], batch_size: usize) -> Result<Vec<usize>> {
    Ok(infer(model, inputs, batch_size)?.iter().map(|(l, _)| argmax(l)).collect())
}

fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|v| (v - max).exp()).sum();
    z.ln() + max - logits[label]
}

/// One optimizer step on `batch`. Returns the batch loss and correct count.
pub fn train_step<M: Model>(model: &mut M, opt: &mut Adam, batch: &[&TrainItem<M::Input>]) -> Result<(f64, usize)> {
    let inputs: Vec<&M::Input> = batch.iter().map(|it| &it.input).collect();
    let labels: Vec<usize> = batch.iter().map(|it| it.label).collect();
    let mut g = Graph::new();
    let fwd = model.forward(&mut g, &inputs, true)?;
    let loss = g.softmax_cross_entropy(fwd.logits, &labels)?;
    let lv = g.value(loss).data()[0];
    if !lv.is_finite() {
        return Err(Error::Diverged(format!("loss became {lv} after {} optimizer steps", opt.steps())));
    }
    let k = model.num_classes();
    let logits = g.value(fwd.logits).data();
    let correct = labels.iter().enumerate().filter(|(i, &l)| argmax(&logits[i * k..(i + 1) * k]) == l).count();
    let grads = g.backward(loss);
    let params = model.params_mut();
    params.zero_grad();
    params.accumulate(&g, &grads);
    if params.iter().any(|p| !p.grad().all_finite()) {
        return Err(Error::Diverged(format!("non-finite gradient after {} optimizer steps", opt.steps())));
    }
    opt.step(params);
    model.after_train_step(&fwd.batch_stats);
    Ok((lv, correct))
}

/// Trains with Adam, selecting the epoch with the best validation accuracy
/// (earliest on ties).
pub fn train<M: Model>(mut model: M, items: &[TrainItem<M::Input>], cfg: &TrainConfig) -> Result<TrainOutcome<M>> {
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    if items.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if let Some(it) = items.iter().find(|it| it.label >= model.num_classes()) {
        return Err(Error::Config(format!("label {} outside {} classes", it.label, model.num_classes())));
    }
    let (train_idx, mut val_idx) = validation_split(items, cfg.validation_fraction, cfg.seed);
    let validation_items = val_idx.len();
    if val_idx.is_empty() {
        // Too few groups to hold any out: select on the training set itself.
        val_idx = train_idx.clone();
    }
    let val_inputs: Vec<&M::Input> = val_idx.iter().map(|&i| &items[i].input).collect();
    let val_labels: Vec<usize> = val_idx.iter().map(|&i| items[i].label).collect();

    let mut opt = Adam::new(cfg.learning_rate);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, M)> = None;
    let mut order = train_idx.clone();
    for epoch in 0..cfg.epochs {
        let mut rng = seed::derived_rng(cfg.seed, &["epoch", &epoch.to_string()]);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrainItem<M::Input>> = chunk.iter().map(|&i| &items[i]).collect();
            let (l, c) = train_step(&mut model, &mut opt, &batch)?;
            loss_sum += l * chunk.len() as f64;
            correct += c;
        }
        let out = infer(&model, &val_inputs, cfg.batch_size)?;
        let mut val_loss = 0.0;
        let mut val_correct = 0;
        for ((logits, _), &l) in out.iter().zip(&val_labels) {
            val_loss += cross_entropy(logits, l);
            val_correct += usize::from(argmax(logits) == l);
        }
        let n_val = val_labels.len() as f64;
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            train_accuracy: correct as f64 / order.len() as f64,
            val_loss: val_loss / n_val,
            val_accuracy: val_correct as f64 / n_val,
        };
        let improved = best.as_ref().map_or(true, |(acc, _, _)| rec.val_accuracy > *acc);
        if improved {
            best = Some((rec.val_accuracy, epoch, model.clone()));
        }
        history.push(rec);
        if let (Some(p), Some((_, be, _))) = (cfg.patience, &best) {
            if epoch - be >= p {
                break;
            }
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutcome { model, best_epoch, history, validation_items })
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for rec in history {
        w.serialize(rec)?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamId;
    use crate::seed::rng;

    /// Logistic regression on vectors, enough to exercise the loop.
    #[derive(Clone, Debug)]
    struct Linear {
        params: ParamStore,
        w: ParamId,
        b: ParamId,
        k: usize,
        e: usize,
    }

    impl Linear {
        fn new(e: usize, k: usize, seed: u64) -> Self {
            let mut params = ParamStore::new();
            let mut r = rng(seed);
            let w = params.add("w", Tensor::randn(&[e, k], 0.1, &mut r));
            let b = params.add("b", Tensor::zeros(&[k]));
            Linear { params, w, b, k, e }
        }
    }

    impl Model for Linear {
        type Input = Vec<f64>;
        fn params(&self) -> &ParamStore {
            &self.params
        }
        fn params_mut(&mut self) -> &mut ParamStore {
            &mut self.params
        }
        fn num_classes(&self) -> usize {
            self.k
        }
        fn embedding_len(&self) -> usize {
            self.e
        }
        fn forward(&self, g: &mut Graph, batch: &[&Vec<f64>], _train: bool) -> Result<Forward> {
            let data: Vec<f64> = batch.iter().flat_map(|v| v.iter().copied()).collect();
            let x = g.input(Tensor::new(&[batch.len(), self.e], data)?);
            let w = g.param(&self.params, self.w);
            let b = g.param(&self.params, self.b);
            let logits = g.linear(x, w, Some(b))?;
            Ok(Forward { logits, embedding: x, batch_stats: Vec::new() })
        }
        fn architecture(&self) -> serde_json::Value {
            serde_json::json!({"kind": "linear"})
        }
    }

    fn blobs(n: usize) -> Vec<TrainItem<Vec<f64>>> {
        (0..n)
            .map(|i| {
                let label = i % 2;
                let s = if label == 0 { -1.0 } else { 1.0 };
                let jitter = ((i * 37 % 11) as f64 - 5.0) * 0.05;
                TrainItem { input: vec![s + jitter, 0.5 * s - jitter], label, group: i / 2 }
            })
            .collect()
    }

    #[test]
    fn learns_separable_blobs_and_is_deterministic() {
        let items = blobs(80);
        let cfg = TrainConfig { epochs: 40, batch_size: 8, learning_rate: 0.05, seed: 3, ..Default::default() };
        let a = train(Linear::new(2, 2, 1), &items, &cfg).unwrap();
        let b = train(Linear::new(2, 2, 1), &items, &cfg).unwrap();
        assert_eq!(a.model.params, b.model.params);
        assert_eq!(a.history, b.history);
        assert!(a.validation_items > 0);
        let inputs: Vec<&Vec<f64>> = items.iter().map(|it| &it.input).collect();
        let pred = predict(&a.model, &inputs, 16).unwrap();
        let acc = pred.iter().zip(&items).filter(|(p, it)| **p == it.label).count() as f64 / items.len() as f64;
        assert!(acc >= 0.99, "accuracy {acc}");
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let items = blobs(20);
        let cfg = TrainConfig { epochs: 3, learning_rate: 0.0, ..Default::default() };
        let m = Linear::new(2, 2, 9);
        let out = train(m.clone(), &items, &cfg).unwrap();
        assert_eq!(out.model.params.named_tensors(), m.params.named_tensors());
    }

    #[test]
    fn best_epoch_has_max_validation_accuracy_earliest() {
        let items = blobs(60);
        let cfg = TrainConfig { epochs: 10, batch_size: 4, learning_rate: 0.02, ..Default::default() };
        let out = train(Linear::new(2, 2, 4), &items, &cfg).unwrap();
        let max = out.history.iter().map(|r| r.val_accuracy).fold(0.0, f64::max);
        let first = out.history.iter().position(|r| r.val_accuracy == max).unwrap();
        assert_eq!(out.best_epoch, first);
    }

    #[test]
    fn validation_split_keeps_groups_whole_and_classes_in_train() {
        let items = blobs(100);
        let (tr, va) = validation_split(&items, 0.1, 0);
        assert_eq!(tr.len() + va.len(), items.len());
        for &v in &va {
            assert!(tr.iter().all(|&t| items[t].group != items[v].group));
        }
        for class in 0..2 {
            assert!(tr.iter().any(|&t| items[t].label == class));
        }
    }

    #[test]
    fn divergence_is_reported() {
        let items = blobs(10);
        let mut m = Linear::new(2, 2, 0);
        let w = m.w;
        m.params.value_mut(w).data_mut()[0] = f64::NAN;
        let err = train(m, &items, &TrainConfig { epochs: 1, ..Default::default() }).unwrap_err();
        assert!(matches!(err, Error::Diverged(_)), "{err}");
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = TrainConfig { epochs: 0, validation_fraction: 1.5, ..Default::default() };
        assert_eq!(cfg.problems().len(), 2);
    }
}
