use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{build_partitions, prepare_recordings, FittedModel};
use crate::pipeline::{extract_samples, PipelineConfig, Sample};
use crate::signal::{DatasetTag, LabelSpace, Recording};

/// `N × E` row-major embeddings with one terrain and dataset tag per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub dim: usize,
    pub values: Vec<f64>,
    pub ids: Vec<String>,
    pub terrains: Vec<String>,
    pub datasets: Vec<DatasetTag>,
}

impl EmbeddingSet {
    pub fn new(dim: usize, values: Vec<f64>, ids: Vec<String>, terrains: Vec<String>, datasets: Vec<DatasetTag>) -> Result<Self> {
        let n = terrains.len();
        if dim == 0 || values.len() != n * dim || ids.len() != n || datasets.len() != n {
            return Err(Error::Shape(format!(
                "embedding set: {} values, dim {dim}, {n} terrains, {} ids, {} tags",
                values.len(),
                ids.len(),
                datasets.len()
            )));
        }
        Ok(EmbeddingSet { dim, values, ids, terrains, datasets })
    }

    pub fn len(&self) -> usize {
        self.terrains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terrains.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Terrain index of each row, in order of first appearance.
    pub fn label_indices(&self) -> Vec<usize> {
        let mut seen: Vec<&str> = Vec::new();
        self.terrains
            .iter()
            .map(|t| match seen.iter().position(|s| s == t) {
                Some(i) => i,
                None => {
                    seen.push(t);
                    seen.len() - 1
                }
            })
            .collect()
    }
}

/// Mean pre-head embedding of each partition's samples, in order of each
/// partition's first sample.
pub fn extract_embeddings(model: &FittedModel, samples: &[Sample], batch_size: usize) -> Result<EmbeddingSet> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to embed".into()));
    }
    let out = model.infer(samples, batch_size)?;
    let dim = model.model.embedding_len();
    let mut order: Vec<&str> = Vec::new();
    let mut sums: Vec<(Vec<f64>, usize, &Sample)> = Vec::new();
    for (s, (_, emb)) in samples.iter().zip(&out) {
        if emb.len() != dim {
            return Err(Error::Shape(format!("embedding of length {}, expected {dim}", emb.len())));
        }
        let slot = match order.iter().position(|p| *p == s.partition_id) {
            Some(i) => i,
            None => {
                order.push(&s.partition_id);
                sums.push((vec![0.0; dim], 0, s));
                sums.len() - 1
            }
        };
        let (acc, count, _) = &mut sums[slot];
        acc.iter_mut().zip(emb).for_each(|(a, e)| *a += e);
        *count += 1;
    }
    let mut values = Vec::with_capacity(sums.len() * dim);
    let (mut ids, mut terrains, mut datasets) = (Vec::new(), Vec::new(), Vec::new());
    for (acc, count, s) in sums {
        values.extend(acc.iter().map(|v| v / count as f64));
        ids.push(s.partition_id.clone());
        terrains.push(s.terrain.to_string());
        datasets.push(s.dataset);
    }
    EmbeddingSet::new(dim, values, ids, terrains, datasets)
}

/// Embeds every partition of `recs`, prepared the same way the model's
/// training data was.
pub fn embed_recordings(
    model: &FittedModel,
    recs: &[Recording],
    space: &LabelSpace,
    pipeline: &PipelineConfig,
    batch_size: usize,
) -> Result<EmbeddingSet> {
    let (prepared, _) = prepare_recordings(recs, model.model.kind())?;
    let set = build_partitions(&prepared, space, pipeline)?;
    let mut samples = Vec::new();
    for p in &set.partitions {
        samples.extend(extract_samples(p, pipeline)?);
    }
    extract_embeddings(model, &samples, batch_size)
}

/// `x,y,terrain,dataset,partition` table.
pub fn write_projection_csv(path: &Path, coords: &[[f64; 2]], set: &EmbeddingSet) -> Result<()> {
    if coords.len() != set.len() {
        return Err(Error::Shape(format!("{} coordinates for {} embeddings", coords.len(), set.len())));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "terrain", "dataset", "partition"])?;
    for (i, c) in coords.iter().enumerate() {
        w.write_record([c[0].to_string(), c[1].to_string(), set.terrains[i].clone(), set.datasets[i].to_string(), set.ids[i].clone()])?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}
