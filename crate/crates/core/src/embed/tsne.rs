//! Exact (O(N²)) t-SNE.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

use super::EmbeddingSet;

const ENTROPY_TOL: f64 = 1e-5;
const MAX_BISECTIONS: usize = 200;
const P_FLOOR: f64 = 1e-12;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Standard deviation of the Gaussian initial layout.
    pub init_std: f64,
    /// Set from the experiment's root seed, never from a config file.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            init_std: 1e-4,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.perplexity > 1.0) {
            out.push(format!("tsne.perplexity must exceed 1, got {}", self.perplexity));
        }
        if self.iterations == 0 {
            out.push("tsne.iterations must be positive".into());
        }
        if !(self.learning_rate > 0.0) {
            out.push(format!("tsne.learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.early_exaggeration >= 1.0) {
            out.push(format!("tsne.early_exaggeration must be at least 1, got {}", self.early_exaggeration));
        }
        for (name, m) in [("initial_momentum", self.initial_momentum), ("final_momentum", self.final_momentum)] {
            if !(0.0..1.0).contains(&m) {
                out.push(format!("tsne.{name} must lie in [0, 1), got {m}"));
            }
        }
        if !(self.init_std > 0.0) {
            out.push(format!("tsne.init_std must be positive, got {}", self.init_std));
        }
        out
    }
}

/// Row-conditional affinities `p_{j|i}` with the precision `β_i = 1/(2σ_i²)`
/// found for each row.
#[derive(Debug, Clone)]
pub struct Affinities {
    pub n: usize,
    pub conditional: Vec<f64>,
    pub betas: Vec<f64>,
    /// Achieved perplexity `exp(H(P_i))` per row.
    pub perplexities: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TsneResult {
    pub coords: Vec<[f64; 2]>,
    /// KL(P‖Q) after each iteration, measured against the unexaggerated P.
    pub kl_history: Vec<f64>,
}

impl TsneResult {
    pub fn final_kl(&self) -> f64 {
        self.kl_history.last().copied().unwrap_or(f64::NAN)
    }

    pub fn flat(&self) -> Vec<f64> {
        self.coords.iter().flat_map(|c| c.iter().copied()).collect()
    }
}

fn squared_distances(x: &[f64], n: usize, dim: usize) -> Vec<f64> {
    let mut d = vec![0.0; n * n];
    d.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let a = &x[i * dim..(i + 1) * dim];
        for (j, v) in row.iter_mut().enumerate() {
            let b = &x[j * dim..(j + 1) * dim];
            *v = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
        }
    });
    d
}

/// Gaussian row `p_{j|i} ∝ exp(−β d_ij)` and its Shannon entropy (nats).
fn gaussian_row(d: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    // Shift by the nearest neighbour so the largest term is exp(0).
    let dmin = d.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v).fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, o) in out.iter_mut().enumerate() {
        *o = if j == i { 0.0 } else { (-beta * (d[j] - dmin)).exp() };
        sum += *o;
    }
    let mut weighted = 0.0;
    for (j, o) in out.iter_mut().enumerate() {
        *o /= sum;
        if j != i {
            weighted += *o * (d[j] - dmin);
        }
    }
    sum.ln() + beta * weighted
}

/// Bisection on each row's precision until `|H(P_i) − ln perplexity| < 1e-5`.
pub fn conditional_affinities(x: &[f64], n: usize, dim: usize, perplexity: f64) -> Result<Affinities> {
    if dim == 0 || x.len() != n * dim {
        return Err(Error::Shape(format!("{} values for {n} rows of dim {dim}", x.len())));
    }
    if !(perplexity > 1.0) || 3.0 * perplexity >= n as f64 {
        return Err(Error::Insufficient(format!(
            "perplexity {perplexity} needs more than {} points, got {n}",
            3.0 * perplexity
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embedding contains a non-finite value".into()));
    }
    let d = squared_distances(x, n, dim);
    let target = perplexity.ln();
    let rows: Vec<(Vec<f64>, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let di = &d[i * n..(i + 1) * n];
            let spread = di.iter().copied().fold(0.0, f64::max) - di.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v).fold(f64::INFINITY, f64::min);
            if !(spread > 0.0) {
                return Err(Error::Degenerate(format!("row {i} is equidistant from all other rows")));
            }
            let mut row = vec![0.0; n];
            let (mut lo, mut hi, mut beta) = (0.0, f64::INFINITY, 1.0 / spread);
            let mut h = gaussian_row(di, i, beta, &mut row);
            for _ in 0..MAX_BISECTIONS {
                let diff = h - target;
                if diff.abs() < ENTROPY_TOL {
                    break;
                }
                if diff > 0.0 {
                    lo = beta;
                    beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
                } else {
                    hi = beta;
                    beta = (beta + lo) / 2.0;
                }
                h = gaussian_row(di, i, beta, &mut row);
            }
            if (h - target).abs() >= ENTROPY_TOL {
                return Err(Error::Degenerate(format!("row {i}: perplexity search did not converge (H = {h}, target {target})")));
            }
            Ok((row, beta, h.exp()))
        })
        .collect::<Result<_>>()?;
    let mut conditional = Vec::with_capacity(n * n);
    let (mut betas, mut perplexities) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for (row, beta, p) in rows {
        conditional.extend(row);
        betas.push(beta);
        perplexities.push(p);
    }
    Ok(Affinities { n, conditional, betas, perplexities })
}

/// Symmetrized joint affinities `p_ij = (p_{j|i} + p_{i|j}) / 2N`.
pub fn joint_affinities(a: &Affinities) -> Vec<f64> {
    let n = a.n;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (a.conditional[i * n + j] + a.conditional[j * n + i]) / (2.0 * n as f64);
        }
    }
    p
}

fn student_kernel(y: &[[f64; 2]]) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    num.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            if i != j {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                *v = 1.0 / (1.0 + dx * dx + dy * dy);
            }
        }
    });
    let z = num.iter().sum();
    (num, z)
}

fn kl_divergence(p: &[f64], num: &[f64], z: f64) -> f64 {
    p.iter()
        .zip(num)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / (qi / z).max(P_FLOOR)).ln())
        .sum()
}

/// Projects an embedding set to 2-D.
pub fn tsne(set: &EmbeddingSet, cfg: &TsneConfig) -> Result<TsneResult> {
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    let n = set.len();
    let aff = conditional_affinities(&set.values, n, set.dim, cfg.perplexity)?;
    let p: Vec<f64> = joint_affinities(&aff).into_iter().enumerate().map(|(k, v)| if k / n == k % n { 0.0 } else { v.max(P_FLOOR) }).collect();

    let mut rng = seed::rng(cfg.seed);
    let normal = Normal::new(0.0, cfg.init_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let mut update = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut kl_history = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let early = it < cfg.exaggeration_iterations;
        let exaggeration = if early { cfg.early_exaggeration } else { 1.0 };
        let momentum = if early { cfg.initial_momentum } else { cfg.final_momentum };
        let (num, z) = student_kernel(&y);
        let grad: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = [0.0; 2];
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let w = (exaggeration * p[i * n + j] - num[i * n + j] / z) * num[i * n + j];
                    g[0] += 4.0 * w * (y[i][0] - y[j][0]);
                    g[1] += 4.0 * w * (y[i][1] - y[j][1]);
                }
                g
            })
            .collect();
        for i in 0..n {
            for k in 0..2 {
                let same_sign = (grad[i][k] > 0.0) == (update[i][k] > 0.0);
                gains[i][k] = if same_sign { gains[i][k] * 0.8 } else { gains[i][k] + 0.2 }.max(MIN_GAIN);
                update[i][k] = momentum * update[i][k] - cfg.learning_rate * gains[i][k] * grad[i][k];
                y[i][k] += update[i][k];
            }
        }
        for k in 0..2 {
            let mean = y.iter().map(|c| c[k]).sum::<f64>() / n as f64;
            y.iter_mut().for_each(|c| c[k] -= mean);
        }
        let (num, z) = student_kernel(&y);
        let kl = kl_divergence(&p, &num, z);
        if !kl.is_finite() || y.iter().any(|c| !c[0].is_finite() || !c[1].is_finite()) {
            return Err(Error::Diverged(format!("t-SNE iteration {it}: non-finite layout")));
        }
        kl_history.push(kl);
    }
    Ok(TsneResult { coords: y, kl_history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::silhouette_score;
    use crate::signal::DatasetTag;
    use proptest::prelude::*;

    fn clusters(per: usize, dim: usize, sep: f64, seed_: u64) -> EmbeddingSet {
        let mut rng = seed::rng(seed_);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut values = Vec::new();
        let mut terrains = Vec::new();
        for c in 0..2 {
            for _ in 0..per {
                for k in 0..dim {
                    let centre = if k == 0 { c as f64 * sep } else { 0.0 };
                    values.push(centre + normal.sample(&mut rng));
                }
                terrains.push(format!("t{c}"));
            }
        }
        let n = 2 * per;
        EmbeddingSet::new(dim, values, (0..n).map(|i| i.to_string()).collect(), terrains, vec![DatasetTag::Vulpi; n]).unwrap()
    }

    #[test]
    fn equidistant_rows_are_degenerate() {
        // One-hot rows: every pair is at squared distance 2.
        let n = 12;
        let mut x = vec![0.0; n * n];
        for i in 0..n {
            x[i * n + i] = 1.0;
        }
        assert!(matches!(conditional_affinities(&x, n, n, 3.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn symmetric_distances_give_equal_bandwidths() {
        // Evenly spaced points on a circle see the same distance multiset.
        let n = 40;
        let x: Vec<f64> = (0..n)
            .flat_map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                [t.cos(), t.sin()]
            })
            .collect();
        let a = conditional_affinities(&x, n, 2, 10.0).unwrap();
        for b in &a.betas {
            assert!((b - a.betas[0]).abs() <= 1e-9 * a.betas[0], "{:?}", a.betas);
        }
    }

    #[test]
    fn affinity_invariants() {
        let set = clusters(30, 6, 4.0, 3);
        let a = conditional_affinities(&set.values, set.len(), set.dim, 10.0).unwrap();
        for i in 0..a.n {
            let row = &a.conditional[i * a.n..(i + 1) * a.n];
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-8);
            assert_eq!(row[i], 0.0);
            assert!((a.perplexities[i] - 10.0).abs() < 1e-3, "row {i}: {}", a.perplexities[i]);
        }
        let p = joint_affinities(&a);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        for i in 0..a.n {
            for j in 0..a.n {
                assert_eq!(p[i * a.n + j], p[j * a.n + i]);
            }
        }
    }

    #[test]
    fn too_few_points() {
        let set = clusters(10, 3, 4.0, 0);
        let cfg = TsneConfig::default();
        assert!(matches!(tsne(&set, &cfg), Err(Error::Insufficient(_))));
    }

    #[test]
    fn identical_embeddings_are_rejected() {
        let n = 20;
        let set = EmbeddingSet::new(2, vec![1.0; 2 * n], vec!["p".into(); n], vec!["a".into(); n], vec![DatasetTag::Vulpi; n]).unwrap();
        let cfg = TsneConfig { perplexity: 5.0, ..TsneConfig::default() };
        assert!(matches!(tsne(&set, &cfg), Err(Error::Degenerate(_))));
    }

    #[test]
    fn separates_two_clusters() {
        let set = clusters(60, 10, 10.0, 7);
        let cfg = TsneConfig { seed: 11, ..TsneConfig::default() };
        let out = tsne(&set, &cfg).unwrap();
        let s = silhouette_score(&out.flat(), 2, &set.label_indices()).unwrap();
        assert!(s > 0.8, "silhouette {s}");
        for k in 0..2 {
            let mean: f64 = out.coords.iter().map(|c| c[k]).sum::<f64>() / out.coords.len() as f64;
            assert!(mean.abs() < 1e-9);
        }
        // After exaggeration ends, the objective settles: no rise above 1%.
        let tail = &out.kl_history[cfg.exaggeration_iterations + 50..];
        for w in tail.windows(2) {
            assert!(w[1] <= w[0] * 1.01, "{} -> {}", w[0], w[1]);
        }
        assert!(out.final_kl() < out.kl_history[cfg.exaggeration_iterations]);
    }

    #[test]
    fn deterministic_per_seed() {
        let set = clusters(20, 4, 6.0, 1);
        let cfg = TsneConfig { perplexity: 5.0, iterations: 120, exaggeration_iterations: 50, seed: 4, ..TsneConfig::default() };
        let a = tsne(&set, &cfg).unwrap();
        let b = tsne(&set, &cfg).unwrap();
        assert_eq!(a.coords, b.coords);
        let c = tsne(&set, &TsneConfig { seed: 5, ..cfg }).unwrap();
        assert_ne!(a.coords, c.coords);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn bisection_hits_target_perplexity(perp in 2.0f64..8.0, s in any::<u64>()) {
            let set = clusters(15, 3, 3.0, s);
            let a = conditional_affinities(&set.values, set.len(), set.dim, perp).unwrap();
            for (i, p) in a.perplexities.iter().enumerate() {
                prop_assert!((p - perp).abs() < 1e-3, "row {}: {} vs {}", i, p, perp);
                let sum: f64 = a.conditional[i * a.n..(i + 1) * a.n].iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-8);
            }
        }
    }
}
