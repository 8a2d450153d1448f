//! Central finite-difference checks of graph gradients.
//!
//! The probed objective is `Σ r ⊙ f(x)` for a fixed random `r`, so every
//! output element contributes. Error per tensor is
//! `‖g_analytic − g_numeric‖ / (‖g_analytic‖ + ‖g_numeric‖)`, zero when both
//! vanish.

use super::graph::{Graph, Var};
use super::param::ParamStore;
use super::tensor::Tensor;
use super::train::Model;
use crate::error::Result;
use crate::seed::Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale: f64 =
        analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn probe(g: &mut Graph, out: Var, r: &Tensor) -> Result<Var> {
    let rv = g.input(r.clone().reshaped(g.value(out).shape())?);
    let prod = g.mul(out, rv)?;
    Ok(g.sum(prod))
}

/// Checks `f` with respect to each of `inputs`; returns one relative error per input.
pub fn check_op<F>(inputs: &[Tensor], f: F, rng: &mut Rng) -> Result<Vec<f64>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let r = Tensor::randn(g.value(out).shape(), 1.0, rng);
    let loss = probe(&mut g, out, &r)?;
    let grads = g.backward(loss);

    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.input(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        let loss = probe(&mut g, out, &r)?;
        Ok(g.value(loss).data()[0])
    };

    let mut errors = Vec::with_capacity(inputs.len());
    let mut xs = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).map_or_else(|| vec![0.0; inputs[k].len()], |t| t.data().to_vec());
        let mut numeric = vec![0.0; inputs[k].len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = xs[k].data()[i];
            xs[k].data_mut()[i] = orig + FD_STEP;
            let up = eval(&xs)?;
            xs[k].data_mut()[i] = orig - FD_STEP;
            let down = eval(&xs)?;
            xs[k].data_mut()[i] = orig;
            *slot = (up - down) / (2.0 * FD_STEP);
        }
        errors.push(relative_error(&analytic, &numeric));
    }
    Ok(errors)
}

fn model_loss<M: Model>(model: &M, batch: &[&M::Input], labels: &[usize]) -> Result<(Graph, Var)> {
    let mut g = Graph::new();
    let fwd = model.forward(&mut g, batch, true)?;
    let loss = g.softmax_cross_entropy(fwd.logits, labels)?;
    Ok((g, loss))
}

/// Checks the train-mode cross-entropy gradient of every model parameter.
/// Returns `(name, relative error)` pairs.
pub fn check_model<M: Model>(model: &M, batch: &[&M::Input], labels: &[usize]) -> Result<Vec<(String, f64)>> {
    let (g, loss) = model_loss(model, batch, labels)?;
    let grads = g.backward(loss);
    let mut store: ParamStore = model.params().clone();
    store.zero_grad();
    store.accumulate(&g, &grads);

    let mut probe_model = model.clone();
    let mut out = Vec::new();
    for id in store.ids().collect::<Vec<_>>() {
        let analytic = store.grad(id).data().to_vec();
        let mut numeric = vec![0.0; analytic.len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = probe_model.params().value(id).data()[i];
            probe_model.params_mut().value_mut(id).data_mut()[i] = orig + FD_STEP;
            let (gu, lu) = model_loss(&probe_model, batch, labels)?;
            probe_model.params_mut().value_mut(id).data_mut()[i] = orig - FD_STEP;
            let (gd, ld) = model_loss(&probe_model, batch, labels)?;
            probe_model.params_mut().value_mut(id).data_mut()[i] = orig;
            *slot = (gu.value(lu).data()[0] - gd.value(ld).data()[0]) / (2.0 * FD_STEP);
        }
        out.push((store.get(id).name.clone(), relative_error(&analytic, &numeric)));
    }
    Ok(out)
}
