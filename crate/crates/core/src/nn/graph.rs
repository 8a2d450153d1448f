//! Reverse-mode differentiation over a recorded graph of tensor ops.
//!
//! A [`Graph`] is built fresh for every forward pass. Each op stores
//! whatever its adjoint needs; [`Graph::backward`] walks the nodes in
//! reverse insertion order, which is a valid topological order because
//! nodes can only reference earlier ones.

use super::param::{ParamId, ParamStore};
use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, Tensor};
use crate::error::{Error, Result};
use crate::models::scan::{linear_scan, ScanMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Batch statistics of one train-mode batch-norm call.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased variance, for running estimates.
    pub var_unbiased: Vec<f64>,
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Linear { x: Var, w: Var, b: Option<Var>, rows: usize, fan_in: usize, fan_out: usize },
    Conv2d { x: Var, w: Var, b: Option<Var>, dims: ConvDims },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64>, batch_stats: bool, dims: (usize, usize, usize) },
    Relu(Var),
    Silu(Var),
    Softplus(Var),
    Mul(Var, Var),
    Add(Var, Var),
    Sum(Var),
    SliceCols { x: Var, start: usize, cols: usize },
    LastRow(Var),
    Concat(Vec<Var>),
    Reshape(Var),
    CausalConv1d { x: Var, w: Var, b: Var },
    SelectiveScan(Box<ScanCache>),
    SoftmaxCrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
}

#[derive(Debug, Clone, Copy)]
struct ConvDims {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
    ho: usize,
    wo: usize,
}

#[derive(Debug)]
struct ScanCache {
    u: Var,
    delta: Var,
    a_log: Var,
    b: Var,
    c: Var,
    d: Var,
    steps: usize,
    width: usize,
    state: usize,
    hidden: Vec<f64>,
    mode: ScanMode,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Adjoints of every node reached from the loss.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn shape_err(msg: String) -> Error {
    Error::Shape(msg)
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    /// Parameter ids referenced by this graph.
    pub fn params(&self) -> impl Iterator<Item = (Var, ParamId)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n.op {
            Op::Param(id) => Some((Var(i), id)),
            _ => None,
        })
    }

    /// `x[..., in] · w[in, out] + b[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.value(x).shape(), self.value(w).shape());
        if ws.len() != 2 || xs.last() != Some(&ws[0]) {
            return Err(shape_err(format!("linear: input {xs:?} vs weight {ws:?}")));
        }
        let (fan_in, fan_out) = (ws[0], ws[1]);
        let rows = self.value(x).len() / fan_in;
        if let Some(b) = b {
            if self.value(b).len() != fan_out {
                return Err(shape_err(format!("linear: bias {:?} for {fan_out} outputs", self.value(b).shape())));
            }
        }
        let mut out = vec![0.0; rows * fan_out];
        if let Some(b) = b {
            for r in out.chunks_mut(fan_out) {
                r.copy_from_slice(self.value(b).data());
            }
        }
        matmul_acc(self.value(x).data(), self.value(w).data(), &mut out, rows, fan_in, fan_out);
        let mut shape = xs.to_vec();
        *shape.last_mut().unwrap() = fan_out;
        Ok(self.push(Tensor::new(&shape, out)?, Op::Linear { x, w, b, rows, fan_in, fan_out }))
    }

    /// Valid (unpadded) stride-1 convolution summing over all input channels.
    /// `x: [N, C, H, W]`, `w: [O, C, k, k]`, `b: [O]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        if xs.len() != 4 || ws.len() != 4 || ws[1] != xs[1] || ws[2] != ws[3] {
            return Err(shape_err(format!("conv2d: input {xs:?} vs weight {ws:?}")));
        }
        let (n, c, h, wd, o, k) = (xs[0], xs[1], xs[2], xs[3], ws[0], ws[2]);
        if k % 2 == 0 {
            return Err(Error::Config(format!("conv2d: kernel size {k} must be odd")));
        }
        if h < k || wd < k {
            return Err(shape_err(format!("conv2d: {h}×{wd} input smaller than {k}×{k} kernel")));
        }
        if let Some(b) = b {
            if self.value(b).len() != o {
                return Err(shape_err(format!("conv2d: bias length {} for {o} outputs", self.value(b).len())));
            }
        }
        let (ho, wo) = (h - k + 1, wd - k + 1);
        let dims = ConvDims { n, c, h, w: wd, o, k, ho, wo };
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = b.map(|b| self.value(b).data());
        let mut out = vec![0.0; n * o * ho * wo];
        for ni in 0..n {
            for oi in 0..o {
                let plane = &mut out[(ni * o + oi) * ho * wo..(ni * o + oi + 1) * ho * wo];
                plane.fill(bv.map_or(0.0, |bv| bv[oi]));
                for ci in 0..c {
                    let xin = &xv[(ni * c + ci) * h * wd..(ni * c + ci + 1) * h * wd];
                    for ki in 0..k {
                        for kj in 0..k {
                            let wt = wv[((oi * c + ci) * k + ki) * k + kj];
                            for y in 0..ho {
                                let src = &xin[(y + ki) * wd + kj..(y + ki) * wd + kj + wo];
                                for (p, s) in plane[y * wo..(y + 1) * wo].iter_mut().zip(src) {
                                    *p += wt * s;
                                }
                            }
                        }
                    }
                }
            }
        }
        let t = Tensor::new(&[n, o, ho, wo], out)?;
        Ok(self.push(t, Op::Conv2d { x, w, b, dims }))
    }

    fn bn_dims(&self, x: Var, gamma: Var) -> Result<(usize, usize, usize)> {
        let xs = self.value(x).shape();
        if xs.len() < 2 {
            return Err(shape_err(format!("batch_norm: input {xs:?} has no channel axis")));
        }
        let (n, c) = (xs[0], xs[1]);
        let inner = xs[2..].iter().product();
        if self.value(gamma).len() != c {
            return Err(shape_err(format!("batch_norm: {} scales for {c} channels", self.value(gamma).len())));
        }
        Ok((n, c, inner))
    }

    fn bn_apply(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f64], inv_std: Vec<f64>, batch_stats: bool, dims: (usize, usize, usize)) -> Result<Var> {
        let (n, c, inner) = dims;
        let xv = self.value(x).data();
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0; xv.len()];
        let mut out = vec![0.0; xv.len()];
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * inner;
                for i in base..base + inner {
                    xhat[i] = (xv[i] - mean[ci]) * inv_std[ci];
                    out[i] = g[ci] * xhat[i] + bt[ci];
                }
            }
        }
        let t = Tensor::new(self.value(x).shape(), out)?;
        Ok(self.push(t, Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats, dims }))
    }

    /// Per-channel standardization with batch statistics, then scale and shift.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats)> {
        let dims = self.bn_dims(x, gamma)?;
        let (n, c, inner) = dims;
        let m = n * inner;
        if m < 2 {
            return Err(Error::Insufficient("batch_norm in train mode needs at least 2 values per channel".into()));
        }
        let xv = self.value(x).data();
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * inner;
                mean[ci] += xv[base..base + inner].iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|v| *v /= m as f64);
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * inner;
                var[ci] += xv[base..base + inner].iter().map(|v| (v - mean[ci]).powi(2)).sum::<f64>();
            }
        }
        let biased: Vec<f64> = var.iter().map(|v| v / m as f64).collect();
        let stats = BatchStats {
            mean: mean.clone(),
            var_unbiased: var.iter().map(|v| v / (m - 1) as f64).collect(),
        };
        let inv_std = biased.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let out = self.bn_apply(x, gamma, beta, &mean, inv_std, true, dims)?;
        Ok((out, stats))
    }

    /// Batch norm with fixed (running) statistics.
    pub fn batch_norm_eval(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f64], var: &[f64], eps: f64) -> Result<Var> {
        let dims = self.bn_dims(x, gamma)?;
        if mean.len() != dims.1 || var.len() != dims.1 {
            return Err(shape_err("batch_norm: running statistics do not match channels".into()));
        }
        let inv_std = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        self.bn_apply(x, gamma, beta, mean, inv_std, false, dims)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(x).map(f);
        self.push(t, op)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * sigmoid(v), Op::Silu(x))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, softplus, Op::Softplus(x))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(shape_err(format!(
                "{what}: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(self.value(a).shape(), data)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(self.value(a).shape(), data)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Columns `[start, start + cols)` of a `[rows, width]` tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, cols: usize) -> Result<Var> {
        let s = self.value(x).shape();
        if s.len() != 2 || start + cols > s[1] {
            return Err(shape_err(format!("slice_cols {start}+{cols} of {s:?}")));
        }
        let (rows, width) = (s[0], s[1]);
        let xv = self.value(x).data();
        let data: Vec<f64> = (0..rows).flat_map(|r| xv[r * width + start..r * width + start + cols].iter().copied()).collect();
        let t = Tensor::new(&[rows, cols], data)?;
        Ok(self.push(t, Op::SliceCols { x, start, cols }))
    }

    /// Last row of a `[rows, width]` tensor, as a `[width]` vector.
    pub fn last_row(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).shape();
        if s.len() != 2 || s[0] == 0 {
            return Err(shape_err(format!("last_row of {s:?}")));
        }
        let w = s[1];
        let xv = self.value(x).data();
        let t = Tensor::from_vec(xv[xv.len() - w..].to_vec());
        Ok(self.push(t, Op::LastRow(x)))
    }

    /// Flattens and concatenates; `out_shape` must cover the total length.
    pub fn concat(&mut self, parts: &[Var], out_shape: &[usize]) -> Result<Var> {
        let data: Vec<f64> = parts.iter().flat_map(|&p| self.value(p).data().iter().copied()).collect();
        let t = Tensor::new(out_shape, data)?;
        Ok(self.push(t, Op::Concat(parts.to_vec())))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    /// Depthwise causal convolution over time. `x: [T, D]`, `w: [D, K]`,
    /// `b: [D]`; `y[t, d] = b[d] + Σ_j w[d, j]·x[t − K + 1 + j, d]`, with
    /// zeros before the first step.
    pub fn causal_conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.value(x).shape();
        let ws = self.value(w).shape();
        if xs.len() != 2 || ws.len() != 2 || ws[0] != xs[1] || self.value(b).len() != xs[1] {
            return Err(shape_err(format!("causal_conv1d: input {xs:?}, kernel {ws:?}")));
        }
        let (steps, d, k) = (xs[0], xs[1], ws[1]);
        let (xv, wv, bv) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut out = vec![0.0; steps * d];
        for t in 0..steps {
            for c in 0..d {
                let mut acc = bv[c];
                for j in 0..k {
                    if let Some(src) = (t + j + 1).checked_sub(k) {
                        acc += wv[c * k + j] * xv[src * d + c];
                    }
                }
                out[t * d + c] = acc;
            }
        }
        let t = Tensor::new(&[steps, d], out)?;
        Ok(self.push(t, Op::CausalConv1d { x, w, b }))
    }

    /// Selective state-space scan.
    ///
    /// Shapes: `u, delta: [T, D]`, `a_log: [D, N]` with `A = −exp(a_log)`,
    /// `b, c: [T, N]`, `d: [D]`. Per channel `d` and state `n`:
    /// `h_t = exp(Δ_t·A)·h_{t−1} + Δ_t·B_t·u_t`, `y_t = ⟨C_t, h_t⟩ + D·u_t`.
    #[allow(clippy::too_many_arguments)]
    pub fn selective_scan(&mut self, u: Var, delta: Var, a_log: Var, b: Var, c: Var, d: Var, mode: ScanMode) -> Result<Var> {
        let us = self.value(u).shape().to_vec();
        let als = self.value(a_log).shape().to_vec();
        if us.len() != 2 || als.len() != 2 || als[0] != us[1] {
            return Err(shape_err(format!("selective_scan: u {us:?}, a_log {als:?}")));
        }
        let (steps, width, state) = (us[0], us[1], als[1]);
        if steps == 0 {
            return Err(Error::Empty("selective_scan over an empty sequence".into()));
        }
        if self.value(delta).shape() != us.as_slice()
            || self.value(b).shape() != [steps, state]
            || self.value(c).shape() != [steps, state]
            || self.value(d).len() != width
        {
            return Err(shape_err("selective_scan: inconsistent parameter shapes".into()));
        }
        for v in [u, delta, a_log, b, c, d] {
            if !self.value(v).all_finite() {
                return Err(Error::NonFinite("selective_scan parameters".into()));
            }
        }
        let uv = self.value(u).data();
        let dv = self.value(delta).data();
        let av: Vec<f64> = self.value(a_log).data().iter().map(|v| -v.exp()).collect();
        let bv = self.value(b).data();
        let cv = self.value(c).data();
        let skip = self.value(d).data();
        let ws = width * state;
        let mut decay = vec![0.0; steps * ws];
        let mut drive = vec![0.0; steps * ws];
        for t in 0..steps {
            for ch in 0..width {
                let dt = dv[t * width + ch];
                let x = uv[t * width + ch];
                for n in 0..state {
                    let i = t * ws + ch * state + n;
                    decay[i] = (dt * av[ch * state + n]).exp();
                    drive[i] = dt * bv[t * state + n] * x;
                }
            }
        }
        let hidden = linear_scan(&decay, &drive, ws, mode);
        let mut y = vec![0.0; steps * width];
        for t in 0..steps {
            for ch in 0..width {
                let h = &hidden[t * ws + ch * state..t * ws + (ch + 1) * state];
                let cc = &cv[t * state..(t + 1) * state];
                y[t * width + ch] = h.iter().zip(cc).map(|(a, b)| a * b).sum::<f64>() + skip[ch] * uv[t * width + ch];
            }
        }
        let out = Tensor::new(&[steps, width], y)?;
        let cache = ScanCache { u, delta, a_log, b, c, d, steps, width, state, hidden, mode };
        Ok(self.push(out, Op::SelectiveScan(Box::new(cache))))
    }

    /// Mean of `−log softmax(logits)[label]` over a `[B, K]` batch.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.value(logits).shape();
        let (bsz, k) = match s {
            [k] => (1, *k),
            [b, k] => (*b, *k),
            _ => return Err(shape_err(format!("cross entropy over logits {s:?}"))),
        };
        if labels.len() != bsz {
            return Err(shape_err(format!("{} labels for batch of {bsz}", labels.len())));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Config(format!("label {l} outside {k} classes")));
        }
        let lv = self.value(logits).data();
        let mut probs = vec![0.0; bsz * k];
        let mut loss = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            let row = &lv[i * k..(i + 1) * k];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
            for j in 0..k {
                probs[i * k + j] = (row[j] - max).exp() / z;
            }
            loss += z.ln() + max - row[label];
        }
        let t = Tensor::scalar(loss / bsz as f64);
        Ok(self.push(t, Op::SoftmaxCrossEntropy { logits, labels: labels.to_vec(), probs }))
    }

    /// Adjoints of every node with respect to the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            self.node_backward(i, &gy, &mut grads);
            grads[i] = Some(gy);
        }
        Gradients { grads }
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, g: &[f64]) {
        match &mut grads[v.0] {
            Some(t) => t.add_assign(g),
            slot @ None => {
                *slot = Some(Tensor::new(self.value(v).shape(), g.to_vec()).expect("gradient shape"));
            }
        }
    }

    fn node_backward(&self, i: usize, gy: &Tensor, grads: &mut [Option<Tensor>]) {
        let g = gy.data();
        match &self.nodes[i].op {
            Op::Input | Op::Param(_) => {}
            Op::Linear { x, w, b, rows, fan_in, fan_out } => {
                let mut gx = vec![0.0; rows * fan_in];
                matmul_bt_acc(g, self.value(*w).data(), &mut gx, *rows, *fan_in, *fan_out);
                let mut gw = vec![0.0; fan_in * fan_out];
                matmul_at_acc(self.value(*x).data(), g, &mut gw, *rows, *fan_in, *fan_out);
                self.acc(grads, *x, &gx);
                self.acc(grads, *w, &gw);
                if let Some(b) = b {
                    let mut gb = vec![0.0; *fan_out];
                    for r in g.chunks(*fan_out) {
                        gb.iter_mut().zip(r).for_each(|(a, v)| *a += v);
                    }
                    self.acc(grads, *b, &gb);
                }
            }
            Op::Conv2d { x, w, b, dims } => {
                let ConvDims { n, c, h, w: wd, o, k, ho, wo } = *dims;
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                let mut gx = vec![0.0; xv.len()];
                let mut gw = vec![0.0; wv.len()];
                let mut gb = vec![0.0; o];
                for ni in 0..n {
                    for oi in 0..o {
                        let gplane = &g[(ni * o + oi) * ho * wo..(ni * o + oi + 1) * ho * wo];
                        gb[oi] += gplane.iter().sum::<f64>();
                        for ci in 0..c {
                            let xoff = (ni * c + ci) * h * wd;
                            for ki in 0..k {
                                for kj in 0..k {
                                    let widx = ((oi * c + ci) * k + ki) * k + kj;
                                    let wt = wv[widx];
                                    let mut acc = 0.0;
                                    for y in 0..ho {
                                        let src = xoff + (y + ki) * wd + kj;
                                        let grow = &gplane[y * wo..(y + 1) * wo];
                                        for (xx, &gv) in grow.iter().enumerate() {
                                            acc += gv * xv[src + xx];
                                            gx[src + xx] += gv * wt;
                                        }
                                    }
                                    gw[widx] += acc;
                                }
                            }
                        }
                    }
                }
                self.acc(grads, *x, &gx);
                self.acc(grads, *w, &gw);
                if let Some(b) = b {
                    self.acc(grads, *b, &gb);
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats, dims } => {
                let (n, c, inner) = *dims;
                let gam = self.value(*gamma).data();
                let m = (n * inner) as f64;
                let mut ggamma = vec![0.0; c];
                let mut gbeta = vec![0.0; c];
                let mut sum_g = vec![0.0; c];
                let mut sum_gx = vec![0.0; c];
                for ni in 0..n {
                    for ci in 0..c {
                        let base = (ni * c + ci) * inner;
                        for j in base..base + inner {
                            ggamma[ci] += g[j] * xhat[j];
                            gbeta[ci] += g[j];
                            let gh = g[j] * gam[ci];
                            sum_g[ci] += gh;
                            sum_gx[ci] += gh * xhat[j];
                        }
                    }
                }
                let mut gx = vec![0.0; g.len()];
                for ni in 0..n {
                    for ci in 0..c {
                        let base = (ni * c + ci) * inner;
                        for j in base..base + inner {
                            let gh = g[j] * gam[ci];
                            gx[j] = if *batch_stats {
                                inv_std[ci] / m * (m * gh - sum_g[ci] - xhat[j] * sum_gx[ci])
                            } else {
                                gh * inv_std[ci]
                            };
                        }
                    }
                }
                self.acc(grads, *x, &gx);
                self.acc(grads, *gamma, &ggamma);
                self.acc(grads, *beta, &gbeta);
            }
            Op::Relu(x) => {
                let gx: Vec<f64> = self.value(*x).data().iter().zip(g).map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 }).collect();
                self.acc(grads, *x, &gx);
            }
            Op::Silu(x) => {
                let gx: Vec<f64> = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&v, &gv)| {
                        let s = sigmoid(v);
                        gv * s * (1.0 + v * (1.0 - s))
                    })
                    .collect();
                self.acc(grads, *x, &gx);
            }
            Op::Softplus(x) => {
                let gx: Vec<f64> = self.value(*x).data().iter().zip(g).map(|(&v, &gv)| gv * sigmoid(v)).collect();
                self.acc(grads, *x, &gx);
            }
            Op::Mul(a, b) => {
                let ga: Vec<f64> = self.value(*b).data().iter().zip(g).map(|(v, gv)| v * gv).collect();
                let gb: Vec<f64> = self.value(*a).data().iter().zip(g).map(|(v, gv)| v * gv).collect();
                self.acc(grads, *a, &ga);
                self.acc(grads, *b, &gb);
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, g);
                self.acc(grads, *b, g);
            }
            Op::Sum(x) => {
                let gx = vec![g[0]; self.value(*x).len()];
                self.acc(grads, *x, &gx);
            }
            Op::SliceCols { x, start, cols } => {
                let s = self.value(*x).shape();
                let (rows, width) = (s[0], s[1]);
                let mut gx = vec![0.0; rows * width];
                for r in 0..rows {
                    gx[r * width + start..r * width + start + cols].copy_from_slice(&g[r * cols..(r + 1) * cols]);
                }
                self.acc(grads, *x, &gx);
            }
            Op::LastRow(x) => {
                let n = self.value(*x).len();
                let mut gx = vec![0.0; n];
                gx[n - g.len()..].copy_from_slice(g);
                self.acc(grads, *x, &gx);
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    self.acc(grads, p, &g[off..off + len]);
                    off += len;
                }
            }
            Op::Reshape(x) => self.acc(grads, *x, g),
            Op::CausalConv1d { x, w, b } => {
                let s = self.value(*x).shape();
                let (steps, d) = (s[0], s[1]);
                let k = self.value(*w).shape()[1];
                let (xv, wv) = (self.value(*x).data(), self.value(*w).data());
                let mut gx = vec![0.0; xv.len()];
                let mut gw = vec![0.0; wv.len()];
                let mut gb = vec![0.0; d];
                for t in 0..steps {
                    for c in 0..d {
                        let gv = g[t * d + c];
                        gb[c] += gv;
                        for j in 0..k {
                            if let Some(src) = (t + j + 1).checked_sub(k) {
                                gw[c * k + j] += gv * xv[src * d + c];
                                gx[src * d + c] += gv * wv[c * k + j];
                            }
                        }
                    }
                }
                self.acc(grads, *x, &gx);
                self.acc(grads, *w, &gw);
                self.acc(grads, *b, &gb);
            }
            Op::SelectiveScan(cache) => self.scan_backward(cache, g, grads),
            Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                let k = probs.len() / labels.len();
                let scale = g[0] / labels.len() as f64;
                let mut gl: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (i, &l) in labels.iter().enumerate() {
                    gl[i * k + l] -= scale;
                }
                self.acc(grads, *logits, &gl);
            }
        }
    }

    fn scan_backward(&self, cache: &ScanCache, gy: &[f64], grads: &mut [Option<Tensor>]) {
        let ScanCache { u, delta, a_log, b, c, d, steps, width, state, ref hidden, mode } = *cache;
        let uv = self.value(u).data();
        let dv = self.value(delta).data();
        let av: Vec<f64> = self.value(a_log).data().iter().map(|v| -v.exp()).collect();
        let bv = self.value(b).data();
        let cv = self.value(c).data();
        let skip = self.value(d).data();
        let ws = width * state;
        let decay = |t: usize, ch: usize, n: usize| (dv[t * width + ch] * av[ch * state + n]).exp();

        // Adjoint of the hidden state runs the recurrence backwards in time:
        // λ_t = gy_t·C_t + Ā_{t+1}·λ_{t+1}. Feed it to the same scan reversed.
        let mut rev_a = vec![0.0; steps * ws];
        let mut rev_b = vec![0.0; steps * ws];
        for s in 0..steps {
            let t = steps - 1 - s;
            for ch in 0..width {
                for n in 0..state {
                    let j = ch * state + n;
                    rev_b[s * ws + j] = gy[t * width + ch] * cv[t * state + n];
                    rev_a[s * ws + j] = if t + 1 < steps { decay(t + 1, ch, n) } else { 0.0 };
                }
            }
        }
        let rev_lambda = linear_scan(&rev_a, &rev_b, ws, mode);

        let mut gu = vec![0.0; steps * width];
        let mut gdelta = vec![0.0; steps * width];
        let mut ga = vec![0.0; ws];
        let mut gb = vec![0.0; steps * state];
        let mut gc = vec![0.0; steps * state];
        let mut gd = vec![0.0; width];
        for t in 0..steps {
            let lam = &rev_lambda[(steps - 1 - t) * ws..(steps - t) * ws];
            for ch in 0..width {
                let i = t * width + ch;
                let (dt, x) = (dv[i], uv[i]);
                gd[ch] += gy[i] * x;
                gu[i] += gy[i] * skip[ch];
                for n in 0..state {
                    let j = ch * state + n;
                    let h = hidden[t * ws + j];
                    gc[t * state + n] += gy[i] * h;
                    let l = lam[j];
                    let prev = if t > 0 { hidden[(t - 1) * ws + j] } else { 0.0 };
                    // ∂h_t/∂Ā_t = h_{t−1}; ∂Ā_t/∂Δ = A·Ā_t; ∂Ā_t/∂A = Δ·Ā_t.
                    let g_decay = l * prev * decay(t, ch, n);
                    let a = av[j];
                    gdelta[i] += g_decay * a + l * bv[t * state + n] * x;
                    ga[j] += g_decay * dt;
                    gb[t * state + n] += l * dt * x;
                    gu[i] += l * dt * bv[t * state + n];
                }
            }
        }
        // A = −exp(a_log) ⇒ ∂A/∂a_log = A.
        let ga_log: Vec<f64> = ga.iter().zip(&av).map(|(g, a)| g * a).collect();
        self.acc(grads, u, &gu);
        self.acc(grads, delta, &gdelta);
        self.acc(grads, a_log, &ga_log);
        self.acc(grads, b, &gb);
        self.acc(grads, c, &gc);
        self.acc(grads, d, &gd);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_op;
    use crate::seed::rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn square_gradient() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::scalar(3.0));
        let mut g = Graph::new();
        let w = g.param(&store, id);
        let sq = g.mul(w, w).unwrap();
        let loss = g.sum(sq);
        let grads = g.backward(loss);
        assert_eq!(grads.get(w).unwrap().data(), &[6.0]);
    }

    #[test]
    fn cross_entropy_reference_values() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[1, 9]));
        let l = g.softmax_cross_entropy(x, &[4]).unwrap();
        assert!((g.value(l).data()[0] - 9f64.ln()).abs() < 1e-12);

        let x = g.input(Tensor::zeros(&[2]));
        let l = g.softmax_cross_entropy(x, &[0]).unwrap();
        assert!((g.value(l).data()[0] - 2f64.ln()).abs() < 1e-12);

        let x = g.input(t(&[1, 3], &[1e3, 0.0, 0.0]));
        let l = g.softmax_cross_entropy(x, &[0]).unwrap();
        assert!(g.value(l).data()[0] < 1e-12);

        let x = g.input(Tensor::zeros(&[1, 3]));
        assert!(matches!(g.softmax_cross_entropy(x, &[3]), Err(Error::Config(_))));
    }

    #[test]
    fn batch_norm_standardizes() {
        let mut g = Graph::new();
        let x = g.input(t(&[2, 1], &[1.0, 3.0]));
        let gamma = g.input(Tensor::full(&[1], 1.0));
        let beta = g.input(Tensor::zeros(&[1]));
        let (y, stats) = g.batch_norm_train(x, gamma, beta, 1e-5).unwrap();
        let out = g.value(y).data();
        assert!((out[0] + 1.0).abs() < 1e-4 && (out[1] - 1.0).abs() < 1e-4);
        assert_eq!(stats.mean, vec![2.0]);
        assert_eq!(stats.var_unbiased, vec![2.0]);

        let gamma0 = g.input(Tensor::zeros(&[1]));
        let beta7 = g.input(Tensor::full(&[1], 7.0));
        let (y, _) = g.batch_norm_train(x, gamma0, beta7, 1e-5).unwrap();
        assert_eq!(g.value(y).data(), &[7.0, 7.0]);
    }

    #[test]
    fn batch_norm_eval_is_stateless() {
        let mut g = Graph::new();
        let x = g.input(t(&[3, 2], &[1.0, -2.0, 0.5, 4.0, 2.0, 0.0]));
        let gamma = g.input(t(&[2], &[1.5, 0.5]));
        let beta = g.input(t(&[2], &[0.1, -0.1]));
        let a = g.batch_norm_eval(x, gamma, beta, &[0.3, 0.2], &[2.0, 1.0], 1e-5).unwrap();
        let b = g.batch_norm_eval(x, gamma, beta, &[0.3, 0.2], &[2.0, 1.0], 1e-5).unwrap();
        assert_eq!(g.value(a), g.value(b));
    }

    #[test]
    fn batch_norm_moments_property() {
        let mut r = rng(5);
        for _ in 0..20 {
            let mut g = Graph::new();
            let x = g.input(Tensor::randn(&[4, 3, 2, 5], 3.0, &mut r));
            let gamma = g.input(Tensor::full(&[3], 1.0));
            let beta = g.input(Tensor::zeros(&[3]));
            let (y, _) = g.batch_norm_train(x, gamma, beta, 0.0).unwrap();
            let v = g.value(y).data();
            for c in 0..3 {
                let vals: Vec<f64> = (0..4).flat_map(|n| v[(n * 3 + c) * 10..(n * 3 + c + 1) * 10].to_vec()).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / vals.len() as f64;
                assert!(mean.abs() < 1e-6);
                assert!((var - 1.0).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn conv_shapes_and_scaling() {
        let mut r = rng(1);
        let mut g = Graph::new();
        let x = g.input(Tensor::randn(&[1, 10, 11, 7], 1.0, &mut r));
        let w = g.input(Tensor::randn(&[16, 10, 1, 1], 1.0, &mut r));
        let b = g.input(Tensor::zeros(&[16]));
        let y = g.conv2d(x, w, Some(b)).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 16, 11, 7]);
        let w3 = g.input(Tensor::randn(&[4, 16, 3, 3], 1.0, &mut r));
        let b3 = g.input(Tensor::zeros(&[4]));
        let z = g.conv2d(y, w3, Some(b3)).unwrap();
        assert_eq!(g.value(z).shape(), &[1, 4, 9, 5]);

        let ones = g.input(Tensor::full(&[1, 1, 2, 2], 1.0));
        let three = g.input(Tensor::full(&[1, 1, 1, 1], 3.0));
        let zero = g.input(Tensor::zeros(&[1]));
        let s = g.conv2d(ones, three, Some(zero)).unwrap();
        assert_eq!(g.value(s).data(), &[3.0; 4]);

        let small = g.input(Tensor::zeros(&[1, 1, 2, 5]));
        let k3 = g.input(Tensor::zeros(&[1, 1, 3, 3]));
        assert!(g.conv2d(small, k3, None).is_err());
        let k2 = g.input(Tensor::zeros(&[1, 1, 2, 2]));
        assert!(matches!(g.conv2d(ones, k2, None), Err(Error::Config(_))));
    }

    #[test]
    fn conv_is_linear() {
        let mut r = rng(2);
        for _ in 0..10 {
            let xa = Tensor::randn(&[2, 3, 6, 5], 1.0, &mut r);
            let xb = Tensor::randn(&[2, 3, 6, 5], 1.0, &mut r);
            let w = Tensor::randn(&[4, 3, 3, 3], 1.0, &mut r);
            let (a, b) = (1.7, -0.4);
            let mixed: Vec<f64> = xa.data().iter().zip(xb.data()).map(|(p, q)| a * p + b * q).collect();
            let mut g = Graph::new();
            let wv = g.input(w);
            let va = g.input(xa);
            let vb = g.input(xb);
            let vm = g.input(Tensor::new(&[2, 3, 6, 5], mixed).unwrap());
            let ya = g.conv2d(va, wv, None).unwrap();
            let yb = g.conv2d(vb, wv, None).unwrap();
            let ym = g.conv2d(vm, wv, None).unwrap();
            for i in 0..g.value(ym).len() {
                let expect = a * g.value(ya).data()[i] + b * g.value(yb).data()[i];
                assert!((g.value(ym).data()[i] - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn causal_conv_matches_definition() {
        let mut g = Graph::new();
        let x = g.input(t(&[4, 1], &[1.0, 2.0, 3.0, 4.0]));
        let w = g.input(t(&[1, 2], &[10.0, 1.0]));
        let b = g.input(t(&[1], &[0.5]));
        let y = g.causal_conv1d(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[1.5, 12.5, 23.5, 34.5]);
    }

    #[test]
    fn scan_scalar_decay() {
        let mut g = Graph::new();
        let u = g.input(t(&[2, 1], &[1.0, 0.0]));
        let delta = g.input(t(&[2, 1], &[1.0, 1.0]));
        let a_log = g.input(t(&[1, 1], &[0.0]));
        let b = g.input(t(&[2, 1], &[1.0, 1.0]));
        let c = g.input(t(&[2, 1], &[1.0, 1.0]));
        let d = g.input(t(&[1], &[0.0]));
        let y = g.selective_scan(u, delta, a_log, b, c, d, ScanMode::Sequential).unwrap();
        let v = g.value(y).data();
        assert_eq!(v[0], 1.0);
        assert!((v[1] - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn scan_rejects_non_finite() {
        let mut g = Graph::new();
        let u = g.input(t(&[1, 1], &[f64::NAN]));
        let one = g.input(t(&[1, 1], &[1.0]));
        let d = g.input(t(&[1], &[0.0]));
        assert!(matches!(
            g.selective_scan(u, one, one, one, one, d, ScanMode::Parallel),
            Err(Error::NonFinite(_))
        ));
    }

    fn assert_ok(errs: Vec<f64>, what: &str) {
        for e in errs {
            assert!(e < 1e-4, "{what}: relative error {e}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng(11);
        for _ in 0..3 {
            let x = Tensor::randn(&[8, 4], 1.0, &mut r);
            let w = Tensor::randn(&[4, 3], 1.0, &mut r);
            let b = Tensor::randn(&[3], 1.0, &mut r);
            assert_ok(check_op(&[x, w, b], |g, v| g.linear(v[0], v[1], Some(v[2])), &mut r).unwrap(), "linear");

            let x = Tensor::randn(&[1, 2, 6, 6], 1.0, &mut r);
            let w = Tensor::randn(&[3, 2, 3, 3], 1.0, &mut r);
            let b = Tensor::randn(&[3], 1.0, &mut r);
            assert_ok(check_op(&[x, w, b], |g, v| g.conv2d(v[0], v[1], Some(v[2])), &mut r).unwrap(), "conv2d");

            let x = Tensor::randn(&[3, 2, 2, 2], 1.0, &mut r);
            let gm = Tensor::randn(&[2], 1.0, &mut r);
            let bt = Tensor::randn(&[2], 1.0, &mut r);
            assert_ok(
                check_op(&[x, gm, bt], |g, v| Ok(g.batch_norm_train(v[0], v[1], v[2], 1e-5)?.0), &mut r).unwrap(),
                "batch_norm",
            );

            let x = Tensor::randn(&[3, 5], 1.0, &mut r);
            assert_ok(check_op(&[x.clone()], |g, v| Ok(g.silu(v[0])), &mut r).unwrap(), "silu");
            assert_ok(check_op(&[x.clone()], |g, v| Ok(g.softplus(v[0])), &mut r).unwrap(), "softplus");
            assert_ok(check_op(&[x.clone()], |g, v| Ok(g.relu(v[0])), &mut r).unwrap(), "relu");
            assert_ok(check_op(&[x.clone()], |g, v| g.softmax_cross_entropy(v[0], &[0, 4, 2]), &mut r).unwrap(), "xent");

            let x = Tensor::randn(&[7, 3], 1.0, &mut r);
            let w = Tensor::randn(&[3, 4], 1.0, &mut r);
            let b = Tensor::randn(&[3], 1.0, &mut r);
            assert_ok(check_op(&[x, w, b], |g, v| g.causal_conv1d(v[0], v[1], v[2]), &mut r).unwrap(), "causal_conv1d");
        }
    }

    #[test]
    fn scan_gradients_match_finite_differences() {
        let mut r = rng(12);
        for mode in [ScanMode::Sequential, ScanMode::Parallel] {
            for _ in 0..3 {
                let (steps, width, state) = (9, 3, 2);
                let u = Tensor::randn(&[steps, width], 1.0, &mut r);
                let delta = Tensor::randn(&[steps, width], 0.3, &mut r).map(|v| v.abs() + 0.1);
                let a_log = Tensor::randn(&[width, state], 0.5, &mut r);
                let b = Tensor::randn(&[steps, state], 1.0, &mut r);
                let c = Tensor::randn(&[steps, state], 1.0, &mut r);
                let d = Tensor::randn(&[width], 1.0, &mut r);
                let errs = check_op(
                    &[u, delta, a_log, b, c, d],
                    |g, v| g.selective_scan(v[0], v[1], v[2], v[3], v[4], v[5], mode),
                    &mut r,
                )
                .unwrap();
                assert_ok(errs, "selective_scan");
            }
        }
    }
}
