use super::PipelineConfig;
use crate::error::{Error, Result};
use crate::signal::{resample_channel, Channel, DatasetTag, Recording, TerrainLabel};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub id: String,
    pub recording_id: String,
    pub terrain: TerrainLabel,
    pub dataset: DatasetTag,
    /// Start time in the recording's clock.
    pub start: f64,
    pub duration: f64,
    pub imu: Channel,
    pub wheel: Channel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub partition_id: String,
    pub terrain: TerrainLabel,
    pub dataset: DatasetTag,
    /// Offset of the window start within its partition, in seconds.
    pub offset: f64,
    pub imu: Channel,
    pub wheel: Channel,
}

/// Resamples both groups onto uniform grids at the given rates.
pub fn resample_recording(rec: &Recording, imu_rate: f64, wheel_rate: f64) -> Result<Recording> {
    Recording::new(
        rec.id.clone(),
        rec.terrain.clone(),
        rec.dataset,
        resample_channel(&rec.imu, imu_rate)?,
        resample_channel(&rec.wheel, wheel_rate)?,
        rec.commands.clone(),
    )
}

fn slice_at(ch: &Channel, t: f64, duration: f64) -> Result<Channel> {
    let count = (duration * ch.rate).round() as usize;
    if count == 0 || count > ch.len() {
        return Err(Error::Insufficient(format!(
            "{}: {duration} s needs {count} rows, channel has {}",
            ch.name,
            ch.len()
        )));
    }
    let start = (((t - ch.start()) * ch.rate + 1e-6).floor().max(0.0) as usize).min(ch.len() - count);
    ch.slice_rows(start, count)
}

/// Cuts consecutive, non-overlapping partitions from the common span of a
/// recording whose groups are uniformly sampled. A trailing remainder
/// shorter than one partition is dropped.
pub fn partition_recording(rec: &Recording, cfg: &PipelineConfig) -> Result<Vec<Partition>> {
    let (start, end) = rec.overlap();
    let n = ((end - start) / cfg.partition_duration + EPS).floor() as usize;
    if n == 0 {
        return Err(Error::Insufficient(format!(
            "{}: {:.2} s of overlapping data is shorter than one {} s partition",
            rec.id,
            end - start,
            cfg.partition_duration
        )));
    }
    (0..n)
        .map(|k| {
            let t = start + k as f64 * cfg.partition_duration;
            Ok(Partition {
                id: format!("{}#{k}", rec.id),
                recording_id: rec.id.clone(),
                terrain: rec.terrain.clone(),
                dataset: rec.dataset,
                start: t,
                duration: cfg.partition_duration,
                imu: slice_at(&rec.imu, t, cfg.partition_duration)?,
                wheel: slice_at(&rec.wheel, t, cfg.partition_duration)?,
            })
        })
        .collect()
}

/// Partitions every recording; recordings shorter than one partition are
/// skipped and their ids returned alongside.
pub fn partition_all(recs: &[Recording], cfg: &PipelineConfig) -> Result<(Vec<Partition>, Vec<String>)> {
    let mut parts = Vec::new();
    let mut skipped = Vec::new();
    for rec in recs {
        match partition_recording(rec, cfg) {
            Ok(p) => parts.extend(p),
            Err(Error::Insufficient(_)) if rec.duration() < cfg.partition_duration => {
                skipped.push(rec.id.clone())
            }
            Err(e) => return Err(e),
        }
    }
    Ok((parts, skipped))
}

/// Window start offsets within a partition.
pub fn sample_offsets(partition_duration: f64, cfg: &PipelineConfig) -> Vec<f64> {
    if cfg.sample_duration > partition_duration + EPS {
        return Vec::new();
    }
    let count = ((partition_duration - cfg.sample_duration) / cfg.sample_stride + EPS).floor() as usize + 1;
    (0..count).map(|i| i as f64 * cfg.sample_stride).collect()
}

fn window(ch: &Channel, offset: f64, duration: f64) -> Result<Channel> {
    let count = (duration * ch.rate).round() as usize;
    if count == 0 || count > ch.len() {
        return Err(Error::Insufficient(format!(
            "{}: {duration} s window needs {count} rows, partition has {}",
            ch.name,
            ch.len()
        )));
    }
    let start = ((offset * ch.rate).round() as usize).min(ch.len() - count);
    ch.slice_rows(start, count)
}

/// Slides fixed-length windows over a partition; every group is cut at the
/// same time offsets.
pub fn extract_samples(p: &Partition, cfg: &PipelineConfig) -> Result<Vec<Sample>> {
    if cfg.sample_duration > p.duration + EPS {
        return Err(Error::Config(format!(
            "sample duration {} s exceeds partition duration {} s",
            cfg.sample_duration, p.duration
        )));
    }
    let min_rate = p.imu.rate.min(p.wheel.rate);
    if (cfg.sample_stride * min_rate).round() < 1.0 {
        return Err(Error::Config(format!(
            "stride {} s rounds to zero ticks at {min_rate} Hz",
            cfg.sample_stride
        )));
    }
    sample_offsets(p.duration, cfg)
        .into_iter()
        .map(|off| {
            Ok(Sample {
                partition_id: p.id.clone(),
                terrain: p.terrain.clone(),
                dataset: p.dataset,
                offset: off,
                imu: window(&p.imu, off, cfg.sample_duration)?,
                wheel: window(&p.wheel, off, cfg.sample_duration)?,
            })
        })
        .collect()
}
