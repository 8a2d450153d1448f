//! Spectrogram classifier: 1×1 conv, BN, ReLU, 3×3 valid conv, BN, ReLU,
//! flatten, dense head.
//!
//! The convolutions carry no bias: a per-channel constant ahead of a
//! train-mode batch norm is subtracted out again, so its gradient is
//! identically zero. The batch-norm shift takes that role.

use serde::{Deserialize, Serialize};

use crate::dsp::MultiChannelSpectrogram;
use crate::error::{Error, Result};
use crate::nn::{BatchStats, Forward, Graph, Model, ParamId, ParamStore, Tensor, Var};
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnConfig {
    pub c_mid: usize,
    pub c_out: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig { c_mid: 16, c_out: 32, bn_momentum: 0.1, bn_eps: 1e-5 }
    }
}

impl CnnConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.c_mid == 0 || self.c_out == 0 {
            out.push("cnn channel widths must be positive".to_string());
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            out.push(format!("cnn.bn_momentum must lie in (0, 1], got {}", self.bn_momentum));
        }
        if !(self.bn_eps > 0.0) {
            out.push("cnn.bn_eps must be positive".to_string());
        }
        out
    }
}

/// Expected input geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnShape {
    pub channels: usize,
    pub freq_bins: usize,
    pub frames: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Running {
    mean: Vec<f64>,
    var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CnnClassifier {
    cfg: CnnConfig,
    shape: CnnShape,
    params: ParamStore,
    conv1: ParamId,
    bn1: (ParamId, ParamId),
    conv2: ParamId,
    bn2: (ParamId, ParamId),
    head: (ParamId, ParamId),
    running: [Option<Running>; 2],
}

impl CnnClassifier {
    pub fn new(shape: CnnShape, cfg: CnnConfig, rng: &mut Rng) -> Result<Self> {
        let problems = cfg.problems();
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        if shape.freq_bins < 3 || shape.frames < 3 {
            return Err(Error::Shape(format!(
                "spectrogram {}×{} is smaller than the 3×3 kernel",
                shape.freq_bins, shape.frames
            )));
        }
        if shape.classes < 2 || shape.channels == 0 {
            return Err(Error::Config(format!("need ≥ 2 classes and ≥ 1 channel, got {shape:?}")));
        }
        let CnnShape { channels: c, classes: k, .. } = shape;
        let (m, o) = (cfg.c_mid, cfg.c_out);
        let e = o * (shape.freq_bins - 2) * (shape.frames - 2);
        let mut p = ParamStore::new();
        let conv1 = p.add("conv1.weight", Tensor::randn(&[m, c, 1, 1], (2.0 / c as f64).sqrt(), rng));
        let bn1 = (p.add("bn1.gamma", Tensor::full(&[m], 1.0)), p.add("bn1.beta", Tensor::zeros(&[m])));
        let conv2 = p.add("conv2.weight", Tensor::randn(&[o, m, 3, 3], (2.0 / (9 * m) as f64).sqrt(), rng));
        let bn2 = (p.add("bn2.gamma", Tensor::full(&[o], 1.0)), p.add("bn2.beta", Tensor::zeros(&[o])));
        let head = (
            p.add("head.weight", Tensor::randn(&[e, k], (1.0 / e as f64).sqrt(), rng)),
            p.add("head.bias", Tensor::zeros(&[k])),
        );
        Ok(CnnClassifier { cfg, shape, params: p, conv1, bn1, conv2, bn2, head, running: [None, None] })
    }

    pub fn shape(&self) -> CnnShape {
        self.shape
    }

    pub fn config(&self) -> &CnnConfig {
        &self.cfg
    }

    /// Overrides the running statistics of batch-norm layer `layer` (0 or 1).
    pub fn set_running_stats(&mut self, layer: usize, mean: Vec<f64>, var: Vec<f64>) -> Result<()> {
        let width = if layer == 0 { self.cfg.c_mid } else { self.cfg.c_out };
        if layer > 1 || mean.len() != width || var.len() != width {
            return Err(Error::Shape(format!("running stats for layer {layer} need {width} entries")));
        }
        self.running[layer] = Some(Running { mean, var });
        Ok(())
    }

    pub fn head_ids(&self) -> (ParamId, ParamId) {
        self.head
    }

    fn check_input(&self, x: &MultiChannelSpectrogram) -> Result<()> {
        let expect = [self.shape.channels, self.shape.freq_bins, self.shape.frames];
        if x.shape() != expect {
            return Err(Error::Shape(format!("spectrogram {:?}, model expects {:?}", x.shape(), expect)));
        }
        Ok(())
    }

    fn bn(&self, g: &mut Graph, x: Var, layer: usize, ids: (ParamId, ParamId), train: bool, stats: &mut Vec<BatchStats>) -> Result<Var> {
        let gamma = g.param(&self.params, ids.0);
        let beta = g.param(&self.params, ids.1);
        if train {
            let (y, s) = g.batch_norm_train(x, gamma, beta, self.cfg.bn_eps)?;
            stats.push(s);
            Ok(y)
        } else {
            let r = self.running[layer]
                .as_ref()
                .ok_or_else(|| Error::Insufficient("batch norm evaluated before any training step".into()))?;
            g.batch_norm_eval(x, gamma, beta, &r.mean, &r.var, self.cfg.bn_eps)
        }
    }
}

impl Model for CnnClassifier {
    type Input = MultiChannelSpectrogram;

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn num_classes(&self) -> usize {
        self.shape.classes
    }

    fn embedding_len(&self) -> usize {
        self.cfg.c_out * (self.shape.freq_bins - 2) * (self.shape.frames - 2)
    }

    fn forward(&self, g: &mut Graph, batch: &[&MultiChannelSpectrogram], train: bool) -> Result<Forward> {
        if batch.is_empty() {
            return Err(Error::Empty("batch".into()));
        }
        let CnnShape { channels: c, freq_bins: f, frames: t, .. } = self.shape;
        let mut data = Vec::with_capacity(batch.len() * c * f * t);
        for x in batch {
            self.check_input(x)?;
            data.extend_from_slice(&x.values);
        }
        let n = batch.len();
        let x = g.input(Tensor::new(&[n, c, f, t], data)?);
        let mut stats = Vec::new();

        let w1 = g.param(&self.params, self.conv1);
        let h = g.conv2d(x, w1, None)?;
        let h = self.bn(g, h, 0, self.bn1, train, &mut stats)?;
        let h = g.relu(h);

        let w2 = g.param(&self.params, self.conv2);
        let h = g.conv2d(h, w2, None)?;
        let h = self.bn(g, h, 1, self.bn2, train, &mut stats)?;
        let h = g.relu(h);

        let embedding = g.reshape(h, &[n, self.embedding_len()])?;
        let hw = g.param(&self.params, self.head.0);
        let hb = g.param(&self.params, self.head.1);
        let logits = g.linear(embedding, hw, Some(hb))?;
        Ok(Forward { logits, embedding, batch_stats: stats })
    }

    /// The first update adopts the batch statistics; later ones blend them
    /// in with weight `bn_momentum`.
    fn after_train_step(&mut self, stats: &[BatchStats]) {
        let m = self.cfg.bn_momentum;
        for (slot, s) in self.running.iter_mut().zip(stats) {
            match slot {
                None => *slot = Some(Running { mean: s.mean.clone(), var: s.var_unbiased.clone() }),
                Some(r) => {
                    for (a, b) in r.mean.iter_mut().zip(&s.mean) {
                        *a = (1.0 - m) * *a + m * b;
                    }
                    for (a, b) in r.var.iter_mut().zip(&s.var_unbiased) {
                        *a = (1.0 - m) * *a + m * b;
                    }
                }
            }
        }
    }

    fn architecture(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "cnn", "shape": self.shape, "config": self.cfg })
    }

    fn buffers(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, r) in self.running.iter().enumerate() {
            if let Some(r) = r {
                out.push((format!("bn{}.running_mean", i + 1), Tensor::from_vec(r.mean.clone())));
                out.push((format!("bn{}.running_var", i + 1), Tensor::from_vec(r.var.clone())));
            }
        }
        out
    }

    fn load_buffers(&mut self, buffers: &[(String, Tensor)]) -> Result<()> {
        let mut fresh = [None, None];
        for layer in 0..2 {
            let find = |suffix: &str| {
                let name = format!("bn{}.{suffix}", layer + 1);
                buffers.iter().find(|(n, _)| *n == name).map(|(_, t)| t.data().to_vec())
            };
            if let (Some(mean), Some(var)) = (find("running_mean"), find("running_var")) {
                fresh[layer] = Some(Running { mean, var });
            }
        }
        self.running = [None, None];
        for (layer, r) in fresh.into_iter().enumerate() {
            if let Some(r) = r {
                self.set_running_stats(layer, r.mean, r.var)?;
            }
        }
        Ok(())
    }
}

/// Eval-mode logits and pre-head embedding for one spectrogram.
pub fn cnn_forward(model: &CnnClassifier, input: &MultiChannelSpectrogram) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut g = Graph::new();
    let fwd = model.forward(&mut g, &[input], false)?;
    Ok((g.value(fwd.logits).data().to_vec(), g.value(fwd.embedding).data().to_vec()))
}
