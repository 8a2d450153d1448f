use crate::error::{Error, Result};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Mean silhouette `(b − a) / max(a, b)` over all points, Euclidean
/// distance. Points alone in their cluster score 0.
pub fn silhouette_score(points: &[f64], dim: usize, labels: &[usize]) -> Result<f64> {
    let n = labels.len();
    if dim == 0 || points.len() != n * dim {
        return Err(Error::Shape(format!("{} values for {n} points of dim {dim}", points.len())));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Degenerate("silhouette needs at least two clusters".into()));
    }
    let sizes: Vec<usize> = (0..k).map(|c| labels.iter().filter(|&&l| l == c).count()).collect();
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut total = 0.0;
    for i in 0..n {
        if sizes[labels[i]] < 2 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += dist(row(i), row(j));
            }
        }
        let a = sums[labels[i]] / (sizes[labels[i]] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != labels[i] && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        total += if m > 0.0 { (b - a) / m } else { 0.0 };
    }
    Ok(total / n as f64)
}
