//! Command statistics per terrain: median and IQR of |v_x| and |ω_z|.
//!
//! Quartiles use linear interpolation between order statistics
//! (position `q·(n−1)`).

use std::collections::BTreeMap;
use std::path::Path;

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};

use super::{Recording, TerrainLabel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandStats {
    pub terrain: TerrainLabel,
    pub median_abs_vx: f64,
    pub iqr_abs_vx: f64,
    pub median_abs_wz: f64,
    pub iqr_abs_wz: f64,
    pub n_partitions: usize,
}

/// Quantile of an ascending slice, linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Order-statistic accumulator fed one value at a time.
#[derive(Debug, Default, Clone)]
pub struct StreamingQuantiles {
    counts: BTreeMap<OrderedFloat<f64>, usize>,
    n: usize,
}

impl StreamingQuantiles {
    pub fn push(&mut self, v: f64) {
        *self.counts.entry(OrderedFloat(v)).or_default() += 1;
        self.n += 1;
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn nth(&self, k: usize) -> f64 {
        let mut seen = 0;
        for (v, c) in &self.counts {
            seen += c;
            if k < seen {
                return v.0;
            }
        }
        unreachable!("rank {k} beyond {} values", self.n)
    }

    pub fn quantile(&self, q: f64) -> f64 {
        assert!(self.n > 0, "quantile of empty accumulator");
        let pos = q.clamp(0.0, 1.0) * (self.n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let (a, b) = (self.nth(lo), self.nth(hi));
        a + (pos - lo as f64) * (b - a)
    }
}

fn partitions_in(rec: &Recording, partition_duration: f64) -> usize {
    (rec.duration() / partition_duration + 1e-9).floor() as usize
}

fn check_inputs(recs: &[Recording], partition_duration: f64, skip_missing: bool) -> Result<()> {
    if !(partition_duration > 0.0) {
        return Err(Error::Config("partition duration must be positive".into()));
    }
    if !skip_missing {
        if let Some(r) = recs.iter().find(|r| r.commands.is_none()) {
            return Err(Error::Insufficient(format!("{}: no command channel", r.id)));
        }
    }
    if recs.iter().all(|r| r.commands.is_none()) {
        return Err(Error::Empty("no command channel in any recording".into()));
    }
    Ok(())
}

/// Sort-based statistics, grouped by terrain in label order.
pub fn compute_command_stats(
    recs: &[Recording],
    partition_duration: f64,
    skip_missing: bool,
) -> Result<Vec<CommandStats>> {
    check_inputs(recs, partition_duration, skip_missing)?;
    let mut groups: BTreeMap<&TerrainLabel, (Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
    for rec in recs {
        let Some(cmd) = &rec.commands else { continue };
        let entry = groups.entry(&rec.terrain).or_default();
        for t in 0..cmd.len() {
            entry.0.push(cmd.row(t)[0].abs());
            entry.1.push(cmd.row(t)[1].abs());
        }
        entry.2 += partitions_in(rec, partition_duration);
    }
    Ok(groups
        .into_iter()
        .filter(|(_, (vx, _, _))| !vx.is_empty())
        .map(|(terrain, (mut vx, mut wz, n))| {
            vx.sort_by(f64::total_cmp);
            wz.sort_by(f64::total_cmp);
            CommandStats {
                terrain: terrain.clone(),
                median_abs_vx: quantile_sorted(&vx, 0.5),
                iqr_abs_vx: quantile_sorted(&vx, 0.75) - quantile_sorted(&vx, 0.25),
                median_abs_wz: quantile_sorted(&wz, 0.5),
                iqr_abs_wz: quantile_sorted(&wz, 0.75) - quantile_sorted(&wz, 0.25),
                n_partitions: n,
            }
        })
        .collect())
}

/// Same statistics through [`StreamingQuantiles`]; must agree exactly with
/// [`compute_command_stats`].
pub fn compute_command_stats_streaming(
    recs: &[Recording],
    partition_duration: f64,
    skip_missing: bool,
) -> Result<Vec<CommandStats>> {
    check_inputs(recs, partition_duration, skip_missing)?;
    let mut groups: BTreeMap<&TerrainLabel, (StreamingQuantiles, StreamingQuantiles, usize)> =
        BTreeMap::new();
    for rec in recs {
        let Some(cmd) = &rec.commands else { continue };
        let entry = groups.entry(&rec.terrain).or_default();
        for t in 0..cmd.len() {
            entry.0.push(cmd.row(t)[0].abs());
            entry.1.push(cmd.row(t)[1].abs());
        }
        entry.2 += partitions_in(rec, partition_duration);
    }
    Ok(groups
        .into_iter()
        .filter(|(_, (vx, _, _))| !vx.is_empty())
        .map(|(terrain, (vx, wz, n))| CommandStats {
            terrain: terrain.clone(),
            median_abs_vx: vx.quantile(0.5),
            iqr_abs_vx: vx.quantile(0.75) - vx.quantile(0.25),
            median_abs_wz: wz.quantile(0.5),
            iqr_abs_wz: wz.quantile(0.75) - wz.quantile(0.25),
            n_partitions: n,
        })
        .collect())
}

/// Writes `terrain,n,median_abs_vx,iqr_abs_vx,median_abs_wz,iqr_abs_wz`.
pub fn write_stats_csv(path: &Path, stats: &[CommandStats]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["terrain", "n", "median_abs_vx", "iqr_abs_vx", "median_abs_wz", "iqr_abs_wz"])?;
    for s in stats {
        w.write_record([
            s.terrain.to_string(),
            s.n_partitions.to_string(),
            format!("{:.4}", s.median_abs_vx),
            format!("{:.4}", s.iqr_abs_vx),
            format!("{:.4}", s.median_abs_wz),
            format!("{:.4}", s.iqr_abs_wz),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}
