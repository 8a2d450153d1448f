//! Multi-rate proprioceptive recordings.
//!
//! A [`Recording`] is one labeled drive: an IMU group (three angular
//! velocities, three linear accelerations), a wheel group (left/right motor
//! current, left/right wheel velocity) and optionally the commanded body
//! velocities. Each group is a [`Channel`] sampled at its own rate.

mod ingest;
mod resample;
mod stats;

pub use ingest::{
    discover, ingest_dataset, ingest_recording, load_store, read_channel, write_recording,
    write_store, DatasetMapping, GroupMapping, Manifest, ManifestEntry, RecordingSource,
};
pub use resample::resample_channel;
pub use stats::{
    compute_command_stats, compute_command_stats_streaming, quantile_sorted, write_stats_csv,
    CommandStats, StreamingQuantiles,
};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IMU_COMPONENTS: [&str; 6] = ["wx", "wy", "wz", "ax", "ay", "az"];
pub const WHEEL_COMPONENTS: [&str; 4] = [
    "current_left",
    "current_right",
    "velocity_left",
    "velocity_right",
];
pub const COMMAND_COMPONENTS: [&str; 2] = ["vx", "wz"];

pub const VULPI_TERRAINS: [&str; 4] = ["concrete", "dirt_road", "ploughed", "unploughed"];
pub const BOREALTC_TERRAINS: [&str; 5] = ["asphalt", "flooring", "ice", "silty_loam", "snow"];

/// Relative tolerance between a declared nominal rate and the measured one.
pub const RATE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetTag {
    #[serde(alias = "boreal")]
    Borealtc,
    Vulpi,
    Other,
}

impl DatasetTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetTag::Borealtc => "borealtc",
            DatasetTag::Vulpi => "vulpi",
            DatasetTag::Other => "other",
        }
    }

    /// The class set a published dataset declares, if any.
    pub fn default_classes(self) -> Option<&'static [&'static str]> {
        match self {
            DatasetTag::Borealtc => Some(&BOREALTC_TERRAINS),
            DatasetTag::Vulpi => Some(&VULPI_TERRAINS),
            DatasetTag::Other => None,
        }
    }
}

impl fmt::Display for DatasetTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DatasetTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "borealtc" | "boreal" => Ok(DatasetTag::Borealtc),
            "vulpi" => Ok(DatasetTag::Vulpi),
            "other" => Ok(DatasetTag::Other),
            _ => Err(Error::Config(format!("unknown dataset tag `{s}`"))),
        }
    }
}

/// Terrain class name, normalized to lowercase snake case.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TerrainLabel(String);

impl TerrainLabel {
    pub fn new(name: &str) -> Self {
        let normalized = name
            .trim()
            .to_ascii_lowercase()
            .replace([' ', '-'], "_");
        TerrainLabel(normalized)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TerrainLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ordered set of class names; position is the class index used by models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    names: Vec<TerrainLabel>,
}

impl LabelSpace {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut out: Vec<TerrainLabel> = Vec::with_capacity(names.len());
        for n in names {
            let label = TerrainLabel::new(n.as_ref());
            if out.contains(&label) {
                return Err(Error::Config(format!("duplicate class `{label}`")));
            }
            out.push(label);
        }
        if out.is_empty() {
            return Err(Error::Empty("label space".into()));
        }
        Ok(LabelSpace { names: out })
    }

    pub fn vulpi() -> Self {
        Self::new(&VULPI_TERRAINS).expect("static class set")
    }

    pub fn borealtc() -> Self {
        Self::new(&BOREALTC_TERRAINS).expect("static class set")
    }

    /// Union of both published class sets, original labels kept.
    pub fn combined() -> Self {
        let mut names: Vec<&str> = VULPI_TERRAINS.to_vec();
        names.extend_from_slice(&BOREALTC_TERRAINS);
        Self::new(&names).expect("static class set")
    }

    /// Label space spanned by a set of recordings, in sorted order.
    pub fn from_recordings(recs: &[Recording]) -> Result<Self> {
        let mut names: Vec<&str> = recs.iter().map(|r| r.terrain.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        Self::new(&names)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, label: &TerrainLabel) -> Option<usize> {
        self.names.iter().position(|n| n == label)
    }

    pub fn names(&self) -> &[TerrainLabel] {
        &self.names
    }

    pub fn contains(&self, label: &TerrainLabel) -> bool {
        self.index_of(label).is_some()
    }
}

/// One channel group sampled at a single rate.
///
/// `values` is row-major, `timestamps.len()` rows of `dims` components.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    /// Nominal sampling frequency in Hz.
    pub rate: f64,
    timestamps: Vec<f64>,
    values: Vec<f64>,
    dims: usize,
}

impl Channel {
    pub fn new(
        name: impl Into<String>,
        rate: f64,
        timestamps: Vec<f64>,
        values: Vec<f64>,
        dims: usize,
    ) -> Result<Self> {
        let name = name.into();
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::Config(format!("{name}: rate must be positive, got {rate}")));
        }
        if dims == 0 {
            return Err(Error::Shape(format!("{name}: zero components")));
        }
        if values.len() != timestamps.len() * dims {
            return Err(Error::Shape(format!(
                "{name}: {} values for {} rows of {dims} components",
                values.len(),
                timestamps.len()
            )));
        }
        for (i, w) in timestamps.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::NonMonotoneTimestamps {
                    context: name,
                    row: i + 1,
                    prev: w[0],
                    next: w[1],
                });
            }
        }
        if let Some(v) = values.iter().chain(&timestamps).find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{name}: {v}")));
        }
        Ok(Channel {
            name,
            rate,
            timestamps,
            values,
            dims,
        })
    }

    /// Uniformly sampled channel starting at `t0`.
    pub fn uniform(
        name: impl Into<String>,
        rate: f64,
        t0: f64,
        values: Vec<f64>,
        dims: usize,
    ) -> Result<Self> {
        let rows = if dims == 0 { 0 } else { values.len() / dims };
        let ts = (0..rows).map(|i| t0 + i as f64 / rate).collect();
        Self::new(name, rate, ts, values, dims)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dims..(t + 1) * self.dims]
    }

    pub fn component(&self, d: usize) -> Vec<f64> {
        self.values.iter().skip(d).step_by(self.dims).copied().collect()
    }

    pub fn start(&self) -> f64 {
        self.timestamps.first().copied().unwrap_or(0.0)
    }

    /// End of the covered interval: the last sample holds for one period.
    pub fn end(&self) -> f64 {
        self.timestamps
            .last()
            .map_or(0.0, |t| t + 1.0 / self.rate)
    }

    /// Median reciprocal spacing of the timestamps.
    pub fn measured_rate(&self) -> Option<f64> {
        if self.len() < 2 {
            return None;
        }
        let mut dts: Vec<f64> = self.timestamps.windows(2).map(|w| w[1] - w[0]).collect();
        dts.sort_by(f64::total_cmp);
        let median = quantile_sorted(&dts, 0.5);
        Some(1.0 / median)
    }

    /// Contiguous rows `[start, start + count)` as a new channel.
    pub fn slice_rows(&self, start: usize, count: usize) -> Result<Channel> {
        if start + count > self.len() {
            return Err(Error::Shape(format!(
                "{}: rows {start}..{} out of {}",
                self.name,
                start + count,
                self.len()
            )));
        }
        Ok(Channel {
            name: self.name.clone(),
            rate: self.rate,
            timestamps: self.timestamps[start..start + count].to_vec(),
            values: self.values[start * self.dims..(start + count) * self.dims].to_vec(),
            dims: self.dims,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub id: String,
    pub terrain: TerrainLabel,
    pub dataset: DatasetTag,
    pub imu: Channel,
    pub wheel: Channel,
    pub commands: Option<Channel>,
}

impl Recording {
    pub fn new(
        id: impl Into<String>,
        terrain: TerrainLabel,
        dataset: DatasetTag,
        imu: Channel,
        wheel: Channel,
        commands: Option<Channel>,
    ) -> Result<Self> {
        let id = id.into();
        if imu.dims() != IMU_COMPONENTS.len() {
            return Err(Error::Shape(format!("{id}: IMU has {} components, expected 6", imu.dims())));
        }
        if wheel.dims() != WHEEL_COMPONENTS.len() {
            return Err(Error::Shape(format!(
                "{id}: wheel group has {} components, expected 4",
                wheel.dims()
            )));
        }
        if let Some(c) = &commands {
            if c.dims() != COMMAND_COMPONENTS.len() {
                return Err(Error::Shape(format!("{id}: commands have {} components, expected 2", c.dims())));
            }
        }
        if imu.is_empty() || wheel.is_empty() {
            return Err(Error::Empty(format!("{id}: empty channel group")));
        }
        Ok(Recording {
            id,
            terrain,
            dataset,
            imu,
            wheel,
            commands,
        })
    }

    /// Common time span covered by the IMU and wheel groups.
    pub fn overlap(&self) -> (f64, f64) {
        let start = self.imu.start().max(self.wheel.start());
        let end = self.imu.end().min(self.wheel.end());
        (start, end.max(start))
    }

    pub fn duration(&self) -> f64 {
        let (s, e) = self.overlap();
        e - s
    }
}
