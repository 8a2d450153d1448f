//! Two-branch selective state-space classifier.
//!
//! Each branch projects its raw sequence to `d_model`, runs one block and
//! keeps the last time step. The two readouts are concatenated into the
//! embedding and a dense head produces logits.
//!
//! Block internals: `[u, z] = x·W_in + b_in`; `u ← silu(causal_conv(u))`;
//! `[δ, B, C] = u·W_x`; `Δ = softplus(δ·W_dt + b_dt)`; selective scan with
//! `A = −exp(A_log)`; `y ← y ⊙ silu(z)`; output `y·W_out + b_out`.

use serde::{Deserialize, Serialize};

use super::scan::ScanMode;
use crate::error::{Error, Result};
use crate::nn::{Forward, Graph, Model, ParamId, ParamStore, Tensor, Var};
use crate::pipeline::Sample;
use crate::seed::Rng;
use rand::Rng as _;

/// Which wheel components feed the wheel branch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WheelInputs {
    /// Currents and velocities.
    #[default]
    All,
    VelocityOnly,
}

impl WheelInputs {
    pub fn width(self) -> usize {
        match self {
            WheelInputs::All => 4,
            WheelInputs::VelocityOnly => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MambaConfig {
    pub d_model: usize,
    pub d_state: usize,
    /// `d_inner = expand · d_model`.
    pub expand: usize,
    pub d_conv: usize,
    /// Defaults to `ceil(d_model / 16)`.
    pub dt_rank: Option<usize>,
    pub dt_min: f64,
    pub dt_max: f64,
    pub wheel_inputs: WheelInputs,
    pub scan: ScanMode,
}

impl Default for MambaConfig {
    fn default() -> Self {
        MambaConfig {
            d_model: 64,
            d_state: 16,
            expand: 2,
            d_conv: 4,
            dt_rank: None,
            dt_min: 1e-3,
            dt_max: 1e-1,
            wheel_inputs: WheelInputs::All,
            scan: ScanMode::Parallel,
        }
    }
}

impl MambaConfig {
    pub fn d_inner(&self) -> usize {
        self.expand * self.d_model
    }

    pub fn dt_rank(&self) -> usize {
        self.dt_rank.unwrap_or_else(|| self.d_model.div_ceil(16))
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [("d_model", self.d_model), ("d_state", self.d_state), ("expand", self.expand), ("d_conv", self.d_conv)] {
            if v == 0 {
                out.push(format!("mamba.{name} must be positive"));
            }
        }
        if self.dt_rank == Some(0) {
            out.push("mamba.dt_rank must be positive".to_string());
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max) {
            out.push(format!("mamba step range [{}, {}] is invalid", self.dt_min, self.dt_max));
        }
        out
    }
}

/// Parameter handles of one block.
#[derive(Debug, Clone, Copy)]
pub struct SsmBlockParams {
    pub in_w: ParamId,
    pub in_b: ParamId,
    pub conv_w: ParamId,
    pub conv_b: ParamId,
    pub x_w: ParamId,
    pub dt_w: ParamId,
    pub dt_b: ParamId,
    pub a_log: ParamId,
    pub d: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

impl SsmBlockParams {
    fn new(p: &mut ParamStore, prefix: &str, cfg: &MambaConfig, rng: &mut Rng) -> Self {
        let (dm, di, n, r) = (cfg.d_model, cfg.d_inner(), cfg.d_state, cfg.dt_rank());
        let name = |s: &str| format!("{prefix}.{s}");
        let in_w = p.add(name("in_proj.weight"), Tensor::uniform(&[dm, 2 * di], (1.0 / dm as f64).sqrt(), rng));
        let in_b = p.add(name("in_proj.bias"), Tensor::zeros(&[2 * di]));
        let conv_w = p.add(name("conv.weight"), Tensor::uniform(&[di, cfg.d_conv], (1.0 / cfg.d_conv as f64).sqrt(), rng));
        let conv_b = p.add(name("conv.bias"), Tensor::zeros(&[di]));
        let x_w = p.add(name("x_proj.weight"), Tensor::uniform(&[di, r + 2 * n], (1.0 / di as f64).sqrt(), rng));
        let dt_w = p.add(name("dt_proj.weight"), Tensor::uniform(&[r, di], (1.0 / r as f64).sqrt(), rng));
        // Bias is softplus⁻¹ of a log-uniform step in [dt_min, dt_max].
        let (lo, hi) = (cfg.dt_min.ln(), cfg.dt_max.ln());
        let dt_bias: Vec<f64> = (0..di)
            .map(|_| {
                let dt: f64 = (lo + rng.gen::<f64>() * (hi - lo)).exp();
                dt + (-(-dt).exp_m1()).ln()
            })
            .collect();
        let dt_b = p.add(name("dt_proj.bias"), Tensor::from_vec(dt_bias));
        let a_init: Vec<f64> = (0..di).flat_map(|_| (1..=n).map(|k| (k as f64).ln())).collect();
        let a_log = p.add(name("a_log"), Tensor::new(&[di, n], a_init).expect("shape"));
        let d = p.add(name("d"), Tensor::full(&[di], 1.0));
        let out_w = p.add(name("out_proj.weight"), Tensor::uniform(&[di, dm], (1.0 / di as f64).sqrt(), rng));
        let out_b = p.add(name("out_proj.bias"), Tensor::zeros(&[dm]));
        SsmBlockParams { in_w, in_b, conv_w, conv_b, x_w, dt_w, dt_b, a_log, d, out_w, out_b }
    }
}

/// Graph nodes for one block's parameters, created once per forward pass.
struct BlockVars {
    in_w: Var,
    in_b: Var,
    conv_w: Var,
    conv_b: Var,
    x_w: Var,
    dt_w: Var,
    dt_b: Var,
    a_log: Var,
    d: Var,
    out_w: Var,
    out_b: Var,
}

impl BlockVars {
    fn bind(g: &mut Graph, p: &ParamStore, b: &SsmBlockParams) -> Self {
        BlockVars {
            in_w: g.param(p, b.in_w),
            in_b: g.param(p, b.in_b),
            conv_w: g.param(p, b.conv_w),
            conv_b: g.param(p, b.conv_b),
            x_w: g.param(p, b.x_w),
            dt_w: g.param(p, b.dt_w),
            dt_b: g.param(p, b.dt_b),
            a_log: g.param(p, b.a_log),
            d: g.param(p, b.d),
            out_w: g.param(p, b.out_w),
            out_b: g.param(p, b.out_b),
        }
    }
}

/// Gated scan output `y ⊙ silu(z)` before the output projection, `[T, d_inner]`.
fn gated_scan(g: &mut Graph, x: Var, v: &BlockVars, cfg: &MambaConfig) -> Result<Var> {
    let (di, n, r) = (cfg.d_inner(), cfg.d_state, cfg.dt_rank());
    let xz = g.linear(x, v.in_w, Some(v.in_b))?;
    let u = g.slice_cols(xz, 0, di)?;
    let z = g.slice_cols(xz, di, di)?;
    let u = g.causal_conv1d(u, v.conv_w, v.conv_b)?;
    let u = g.silu(u);
    let proj = g.linear(u, v.x_w, None)?;
    let dt_in = g.slice_cols(proj, 0, r)?;
    let b = g.slice_cols(proj, r, n)?;
    let c = g.slice_cols(proj, r + n, n)?;
    let dt = g.linear(dt_in, v.dt_w, Some(v.dt_b))?;
    let delta = g.softplus(dt);
    let y = g.selective_scan(u, delta, v.a_log, b, c, v.d, cfg.scan)?;
    let gate = g.silu(z);
    g.mul(y, gate)
}

fn check_seq(g: &Graph, x: Var, width: usize, what: &str) -> Result<()> {
    let s = g.value(x).shape();
    if s.len() != 2 || s[1] != width {
        return Err(Error::Shape(format!("{what}: sequence {s:?}, expected [T, {width}]")));
    }
    if s[0] == 0 {
        return Err(Error::Empty(format!("{what} sequence")));
    }
    Ok(())
}

/// Full block output, `[T, d_model]` in, `[T, d_model]` out.
pub fn mamba_block(store: &ParamStore, block: &SsmBlockParams, cfg: &MambaConfig, x: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    check_seq(&g, xv, cfg.d_model, "block input")?;
    let v = BlockVars::bind(&mut g, store, block);
    let h = gated_scan(&mut g, xv, &v, cfg)?;
    let y = g.linear(h, v.out_w, Some(v.out_b))?;
    Ok(g.value(y).clone())
}

/// One raw sequence pair at native rates.
#[derive(Debug, Clone, PartialEq)]
pub struct SequencePair {
    /// `[T_imu, 6]`.
    pub imu: Tensor,
    /// `[T_wheel, 4]`.
    pub wheel: Tensor,
}

impl SequencePair {
    pub fn new(imu: Tensor, wheel: Tensor) -> Self {
        SequencePair { imu, wheel }
    }

    pub fn from_sample(s: &Sample) -> Result<Self> {
        Ok(SequencePair {
            imu: Tensor::new(&[s.imu.len(), s.imu.dims()], s.imu.values().to_vec())?,
            wheel: Tensor::new(&[s.wheel.len(), s.wheel.dims()], s.wheel.values().to_vec())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MambaShape {
    pub imu_dims: usize,
    pub wheel_dims: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, Copy)]
struct Branch {
    embed_w: ParamId,
    embed_b: ParamId,
    block: SsmBlockParams,
}

#[derive(Debug, Clone)]
pub struct MambaClassifier {
    cfg: MambaConfig,
    shape: MambaShape,
    params: ParamStore,
    imu: Branch,
    wheel: Branch,
    head: (ParamId, ParamId),
}

impl MambaClassifier {
    pub fn new(shape: MambaShape, cfg: MambaConfig, rng: &mut Rng) -> Result<Self> {
        let problems = cfg.problems();
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        if shape.classes < 2 {
            return Err(Error::Config(format!("need ≥ 2 classes, got {}", shape.classes)));
        }
        if shape.wheel_dims < cfg.wheel_inputs.width() {
            return Err(Error::Shape(format!("wheel stream has {} components", shape.wheel_dims)));
        }
        let dm = cfg.d_model;
        let mut p = ParamStore::new();
        let branch = |p: &mut ParamStore, prefix: &str, width: usize, rng: &mut Rng| Branch {
            embed_w: p.add(format!("{prefix}.embed.weight"), Tensor::uniform(&[width, dm], (1.0 / width as f64).sqrt(), rng)),
            embed_b: p.add(format!("{prefix}.embed.bias"), Tensor::zeros(&[dm])),
            block: SsmBlockParams::new(p, &format!("{prefix}.block"), &cfg, rng),
        };
        let imu = branch(&mut p, "imu", shape.imu_dims, rng);
        let wheel = branch(&mut p, "wheel", cfg.wheel_inputs.width(), rng);
        let head = (
            p.add("head.weight", Tensor::uniform(&[2 * dm, shape.classes], (1.0 / (2 * dm) as f64).sqrt(), rng)),
            p.add("head.bias", Tensor::zeros(&[shape.classes])),
        );
        Ok(MambaClassifier { cfg, shape, params: p, imu, wheel, head })
    }

    pub fn config(&self) -> &MambaConfig {
        &self.cfg
    }

    pub fn shape(&self) -> MambaShape {
        self.shape
    }

    pub fn imu_block(&self) -> &SsmBlockParams {
        &self.imu.block
    }

    pub fn head_ids(&self) -> (ParamId, ParamId) {
        self.head
    }

    fn wheel_view(&self, wheel: &Tensor) -> Result<Tensor> {
        match self.cfg.wheel_inputs {
            WheelInputs::All => Ok(wheel.clone()),
            WheelInputs::VelocityOnly => {
                let s = wheel.shape();
                let w = s.get(1).copied().unwrap_or(0);
                if w != 4 {
                    return Err(Error::Shape(format!("wheel sequence {s:?}, expected [T, 4]")));
                }
                let data = wheel.data().chunks(4).flat_map(|r| [r[2], r[3]]).collect();
                Tensor::new(&[s[0], 2], data)
            }
        }
    }

    fn branch_readout(&self, g: &mut Graph, seq: &Tensor, width: usize, vars: &(Var, Var, BlockVars), what: &str) -> Result<Var> {
        let x = g.input(seq.clone());
        check_seq(g, x, width, what)?;
        let h = g.linear(x, vars.0, Some(vars.1))?;
        let gated = gated_scan(g, h, &vars.2, &self.cfg)?;
        // Only the last step reaches the head; projecting that row alone
        // equals the last row of the full block output.
        let last = g.last_row(gated)?;
        let last = g.reshape(last, &[1, self.cfg.d_inner()])?;
        let out = g.linear(last, vars.2.out_w, Some(vars.2.out_b))?;
        g.reshape(out, &[self.cfg.d_model])
    }

    fn bind_branch(&self, g: &mut Graph, b: &Branch) -> (Var, Var, BlockVars) {
        (g.param(&self.params, b.embed_w), g.param(&self.params, b.embed_b), BlockVars::bind(g, &self.params, &b.block))
    }
}

impl Model for MambaClassifier {
    type Input = SequencePair;

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
        2 * self.cfg.d_model
    }

    fn forward(&self, g: &mut Graph, batch: &[&SequencePair], _train: bool) -> Result<Forward> {
        if batch.is_empty() {
            return Err(Error::Empty("batch".into()));
        }
        let imu_vars = self.bind_branch(g, &self.imu);
        let wheel_vars = self.bind_branch(g, &self.wheel);
        let mut parts = Vec::with_capacity(2 * batch.len());
        for s in batch {
            parts.push(self.branch_readout(g, &s.imu, self.shape.imu_dims, &imu_vars, "imu")?);
            let wheel = self.wheel_view(&s.wheel)?;
            parts.push(self.branch_readout(g, &wheel, self.cfg.wheel_inputs.width(), &wheel_vars, "wheel")?);
        }
        let embedding = g.concat(&parts, &[batch.len(), self.embedding_len()])?;
        let hw = g.param(&self.params, self.head.0);
        let hb = g.param(&self.params, self.head.1);
        let logits = g.linear(embedding, hw, Some(hb))?;
        Ok(Forward { logits, embedding, batch_stats: Vec::new() })
    }

    fn architecture(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "mamba", "shape": self.shape, "config": self.cfg })
    }
}

/// Logits and embedding for one sequence pair.
pub fn mamba_forward(model: &MambaClassifier, input: &SequencePair) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut g = Graph::new();
    let fwd = model.forward(&mut g, &[input], false)?;
    Ok((g.value(fwd.logits).data().to_vec(), g.value(fwd.embedding).data().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_model;
    use crate::seed::rng;

    fn model(dm: usize, n: usize, seed: u64) -> MambaClassifier {
        let cfg = MambaConfig { d_model: dm, d_state: n, ..Default::default() };
        MambaClassifier::new(MambaShape { imu_dims: 6, wheel_dims: 4, classes: 3 }, cfg, &mut rng(seed)).unwrap()
    }

    fn pair(ti: usize, tw: usize, r: &mut Rng) -> SequencePair {
        SequencePair::new(Tensor::randn(&[ti, 6], 1.0, r), Tensor::randn(&[tw, 4], 1.0, r))
    }

    #[test]
    fn native_rate_lengths_and_embedding() {
        let m = model(64, 16, 0);
        let mut r = rng(1);
        let (logits, emb) = mamba_forward(&m, &pair(170, 11, &mut r)).unwrap();
        assert_eq!(logits.len(), 3);
        assert_eq!(emb.len(), 128);
        let (w, b) = m.head_ids();
        let (wv, bv) = (m.params().value(w).data(), m.params().value(b).data());
        for k in 0..3 {
            let manual: f64 = bv[k] + (0..128).map(|i| emb[i] * wv[i * 3 + k]).sum::<f64>();
            assert!((manual - logits[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn block_preserves_shape_and_is_causal() {
        let m = model(8, 4, 2);
        let mut r = rng(3);
        let x = Tensor::randn(&[24, 8], 1.0, &mut r);
        let y = mamba_block(m.params(), m.imu_block(), m.config(), &x).unwrap();
        assert_eq!(y.shape(), &[24, 8]);
        for t in 0..24 {
            let mut xp = x.clone();
            for v in &mut xp.data_mut()[t * 8..(t + 1) * 8] {
                *v += 0.75;
            }
            let yp = mamba_block(m.params(), m.imu_block(), m.config(), &xp).unwrap();
            assert_eq!(&y.data()[..t * 8], &yp.data()[..t * 8], "step {t}");
            assert_ne!(&y.data()[t * 8..], &yp.data()[t * 8..]);
        }
    }

    #[test]
    fn zero_input_and_zero_biases_give_zero_output() {
        let m = model(8, 4, 4);
        let y = mamba_block(m.params(), m.imu_block(), m.config(), &Tensor::zeros(&[12, 8])).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn readout_equals_last_row_of_block() {
        let m = model(8, 4, 5);
        let mut r = rng(6);
        let s = pair(15, 5, &mut r);
        let (_, emb) = mamba_forward(&m, &s).unwrap();
        let (ew, eb) = (m.params().value(m.imu.embed_w), m.params().value(m.imu.embed_b));
        let mut h = vec![0.0; 15 * 8];
        for t in 0..15 {
            for j in 0..8 {
                h[t * 8 + j] = eb.data()[j] + (0..6).map(|i| s.imu.data()[t * 6 + i] * ew.data()[i * 8 + j]).sum::<f64>();
            }
        }
        let y = mamba_block(m.params(), m.imu_block(), m.config(), &Tensor::new(&[15, 8], h).unwrap()).unwrap();
        for j in 0..8 {
            assert!((y.data()[14 * 8 + j] - emb[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn branches_are_independent() {
        let m = model(8, 4, 7);
        let mut r = rng(8);
        let s = pair(20, 6, &mut r);
        let mut longer = s.clone();
        let extra = Tensor::randn(&[3, 6], 1.0, &mut r);
        let mut data = s.imu.data().to_vec();
        data.extend_from_slice(extra.data());
        longer.imu = Tensor::new(&[23, 6], data).unwrap();
        let (_, a) = mamba_forward(&m, &s).unwrap();
        let (_, b) = mamba_forward(&m, &longer).unwrap();
        assert_ne!(&a[..8], &b[..8]);
        assert_eq!(&a[8..], &b[8..]);
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let m = model(8, 4, 9);
        let s = SequencePair::new(Tensor::zeros(&[0, 6]), Tensor::zeros(&[3, 4]));
        assert!(matches!(mamba_forward(&m, &s), Err(Error::Empty(_))));
    }

    #[test]
    fn velocity_only_wheel_branch() {
        let cfg = MambaConfig { d_model: 4, d_state: 2, wheel_inputs: WheelInputs::VelocityOnly, ..Default::default() };
        let m = MambaClassifier::new(MambaShape { imu_dims: 6, wheel_dims: 4, classes: 2 }, cfg, &mut rng(1)).unwrap();
        let mut r = rng(2);
        let s = pair(10, 4, &mut r);
        let mut currents_changed = s.clone();
        for row in currents_changed.wheel.data_mut().chunks_mut(4) {
            row[0] += 5.0;
            row[1] -= 5.0;
        }
        assert_eq!(mamba_forward(&m, &s).unwrap(), mamba_forward(&m, &currents_changed).unwrap());
    }

    #[test]
    fn full_model_gradients() {
        // Steps of order one keep every parameter's gradient well above
        // finite-difference round-off.
        let cfg = MambaConfig { d_model: 4, d_state: 2, dt_min: 0.3, dt_max: 1.5, ..Default::default() };
        let m = MambaClassifier::new(MambaShape { imu_dims: 6, wheel_dims: 4, classes: 3 }, cfg, &mut rng(10)).unwrap();
        let mut r = rng(11);
        let batch: Vec<_> = (0..2).map(|i| pair(7 + i, 3 + i, &mut r)).collect();
        let refs: Vec<_> = batch.iter().collect();
        for (name, err) in check_model(&m, &refs, &[2, 0]).unwrap() {
            assert!(err < 1e-4, "{name}: {err}");
        }
    }
}
