//! First-order linear recurrences `h_t = a_t ⊙ h_{t−1} + b_t` with `h_{−1} = 0`.
//!
//! Each step is the affine map `h ↦ a·h + b`; composing two steps
//! (first `(a1, b1)`, then `(a2, b2)`) gives `(a1·a2, a2·b1 + b2)`, which is
//! associative. [`parallel_scan`] evaluates the recurrence with a
//! work-efficient up-sweep/down-sweep over that operator; every tree level
//! is a batch of independent combines that runs on the rayon pool once it
//! is large enough. [`sequential_scan`] is the plain loop.
//!
//! The exclusive prefix at position `t` is assembled only from subtrees
//! lying strictly left of `t`, so outputs before `t` never read `a_t` or
//! `b_t`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanMode {
    Sequential,
    #[default]
    Parallel,
}

/// Element count per tree level above which combines run in parallel.
const PARALLEL_THRESHOLD: usize = 1 << 15;

/// `a`, `b`: `steps × width` row-major. Returns all `h_t`, same layout.
pub fn linear_scan(a: &[f64], b: &[f64], width: usize, mode: ScanMode) -> Vec<f64> {
    match mode {
        ScanMode::Sequential => sequential_scan(a, b, width),
        ScanMode::Parallel => parallel_scan(a, b, width),
    }
}

pub fn sequential_scan(a: &[f64], b: &[f64], width: usize) -> Vec<f64> {
    assert_eq!(a.len(), b.len());
    let mut h = vec![0.0; a.len()];
    if width == 0 || a.is_empty() {
        return h;
    }
    h[..width].copy_from_slice(&b[..width]);
    for t in 1..a.len() / width {
        let (prev, cur) = h.split_at_mut(t * width);
        let prev = &prev[(t - 1) * width..];
        let off = t * width;
        for j in 0..width {
            cur[j] = a[off + j] * prev[j] + b[off + j];
        }
    }
    h
}

/// Composes the step held at `left` (earlier) into the one at `right`.
fn combine_into(al: &[f64], bl: &[f64], ar: &mut [f64], br: &mut [f64]) {
    for j in 0..ar.len() {
        br[j] += ar[j] * bl[j];
        ar[j] *= al[j];
    }
}

/// One level of combines over blocks of `2·half` steps.
fn level<F>(ta: &mut [f64], tb: &mut [f64], width: usize, half: usize, f: F)
where
    F: Fn(&mut [f64], &mut [f64]) + Sync + Send,
{
    let block = 2 * half * width;
    if ta.len() >= PARALLEL_THRESHOLD && ta.len() / block > 1 {
        ta.par_chunks_mut(block)
            .zip(tb.par_chunks_mut(block))
            .for_each(|(ca, cb)| f(ca, cb));
    } else {
        ta.chunks_mut(block).zip(tb.chunks_mut(block)).for_each(|(ca, cb)| f(ca, cb));
    }
}

pub fn parallel_scan(a: &[f64], b: &[f64], width: usize) -> Vec<f64> {
    assert_eq!(a.len(), b.len());
    if width == 0 || a.is_empty() {
        return vec![0.0; a.len()];
    }
    let steps = a.len() / width;
    let n = steps.next_power_of_two();
    // Pad with identity steps (a = 1, b = 0).
    let mut ta = vec![1.0; n * width];
    let mut tb = vec![0.0; n * width];
    ta[..a.len()].copy_from_slice(a);
    tb[..b.len()].copy_from_slice(b);

    let mut half = 1;
    while half < n {
        level(&mut ta, &mut tb, width, half, |ca, cb| {
            let l = (half - 1) * width;
            let r = (2 * half - 1) * width;
            let (al, ar) = ca.split_at_mut(r);
            let (bl, br) = cb.split_at_mut(r);
            combine_into(&al[l..l + width], &bl[l..l + width], &mut ar[..width], &mut br[..width]);
        });
        half *= 2;
    }

    // Down-sweep: turn subtree totals into exclusive prefixes.
    ta[(n - 1) * width..].fill(1.0);
    tb[(n - 1) * width..].fill(0.0);
    let mut half = n / 2;
    while half >= 1 {
        level(&mut ta, &mut tb, width, half, |ca, cb| {
            let l = (half - 1) * width;
            let r = (2 * half - 1) * width;
            let (al, ar) = ca.split_at_mut(r);
            let (bl, br) = cb.split_at_mut(r);
            let (al, ar) = (&mut al[l..l + width], &mut ar[..width]);
            let (bl, br) = (&mut bl[l..l + width], &mut br[..width]);
            // left total becomes the parent prefix; right becomes prefix ∘ left total.
            for j in 0..width {
                let (sa, sb) = (al[j], bl[j]);
                al[j] = ar[j];
                bl[j] = br[j];
                br[j] = sa * br[j] + sb;
                ar[j] *= sa;
            }
        });
        half /= 2;
    }

    // Inclusive state from the exclusive prefix applied to h = 0: h_t = a_t·p_b + b_t.
    let mut h = vec![0.0; a.len()];
    for i in 0..a.len() {
        h[i] = a[i] * tb[i] + b[i];
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(steps: usize, width: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = crate::seed::rng(seed);
        let a = (0..steps * width).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b = (0..steps * width).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (a, b)
    }

    #[test]
    fn parallel_matches_sequential() {
        for (steps, width) in [(1, 3), (2, 1), (7, 4), (64, 8), (100, 5), (513, 2)] {
            let (a, b) = random(steps, width, steps as u64);
            let s = sequential_scan(&a, &b, width);
            let p = parallel_scan(&a, &b, width);
            let err = s.iter().zip(&p).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "steps {steps}: {err}");
        }
    }

    #[test]
    fn large_levels_take_the_threaded_path() {
        let (a, b) = random(4096, 16, 1);
        let s = sequential_scan(&a, &b, 16);
        let p = parallel_scan(&a, &b, 16);
        let err = s.iter().zip(&p).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn unit_decay_is_a_running_sum() {
        let b: Vec<f64> = (1..=6).map(f64::from).collect();
        let h = parallel_scan(&[1.0; 6], &b, 1);
        assert_eq!(h, vec![1.0, 3.0, 6.0, 10.0, 15.0, 21.0]);
    }

    #[test]
    fn prefix_is_unaffected_by_later_steps() {
        let (a, mut b) = random(37, 3, 5);
        let before = parallel_scan(&a, &b, 3);
        b[20 * 3 + 1] += 1.0;
        let after = parallel_scan(&a, &b, 3);
        assert_eq!(before[..20 * 3], after[..20 * 3]);
    }
}
