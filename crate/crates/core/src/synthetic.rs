//! Synthetic recordings with a known answer.
//!
//! Every terrain class gets its own vibration frequency. IMU components
//! carry that sinusoid (random phase per component and recording) plus
//! white noise; wheel components carry class-independent noise around a
//! constant cruise value. Classes are therefore separable from the IMU
//! spectrum alone.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::signal::{Channel, DatasetTag, Recording, TerrainLabel, COMMAND_COMPONENTS};
use rand::Rng as _;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticClass {
    pub terrain: String,
    /// Vibration frequency in Hz.
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dataset: DatasetTag,
    pub classes: Vec<SyntheticClass>,
    pub recordings_per_class: usize,
    /// Seconds per recording.
    pub duration: f64,
    pub imu_rate: f64,
    pub wheel_rate: f64,
    pub amplitude: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Two classes at 3 Hz and 8 Hz with Vulpi-like rates.
    pub fn two_class(seed: u64) -> Self {
        SyntheticSpec {
            dataset: DatasetTag::Other,
            classes: vec![
                SyntheticClass { terrain: "low_hum".into(), frequency: 3.0 },
                SyntheticClass { terrain: "high_hum".into(), frequency: 8.0 },
            ],
            recordings_per_class: 4,
            duration: 30.0,
            imu_rate: 50.0,
            wheel_rate: 15.0,
            amplitude: 1.0,
            noise_std: 0.5,
            seed,
        }
    }

    /// Stand-in for one of the two public datasets: its terrain names,
    /// dataset tag and native rates, with synthetic signals.
    pub fn stand_in(dataset: DatasetTag, seed: u64) -> Result<Self> {
        let (names, imu_rate, wheel_rate, offset) = match dataset {
            DatasetTag::Vulpi => (dataset.default_classes().unwrap_or_default(), 50.0, 15.0, 0),
            DatasetTag::Borealtc => (dataset.default_classes().unwrap_or_default(), 100.0, 6.5, 4),
            DatasetTag::Other => return Err(Error::Config("stand-ins exist for vulpi and borealtc only".into())),
        };
        Ok(SyntheticSpec {
            dataset,
            classes: names
                .iter()
                .enumerate()
                .map(|(i, n)| SyntheticClass { terrain: n.to_string(), frequency: 1.5 + 2.5 * (i + offset) as f64 })
                .collect(),
            recordings_per_class: 3,
            duration: 30.0,
            imu_rate,
            wheel_rate,
            amplitude: 1.0,
            noise_std: 0.5,
            seed,
        })
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.classes.len() < 2 {
            out.push("synthetic data needs at least two classes".to_string());
        }
        if self.recordings_per_class == 0 {
            out.push("recordings_per_class must be positive".to_string());
        }
        if !(self.duration > 0.0 && self.imu_rate > 0.0 && self.wheel_rate > 0.0) {
            out.push("duration and rates must be positive".to_string());
        }
        if !(self.noise_std >= 0.0) {
            out.push("noise_std must be non-negative".to_string());
        }
        for c in &self.classes {
            if !(c.frequency > 0.0 && c.frequency < self.imu_rate / 2.0) {
                out.push(format!("class `{}`: frequency {} Hz outside (0, Nyquist)", c.terrain, c.frequency));
            }
        }
        out
    }
}

fn channel(name: &str, rate: f64, duration: f64, dims: usize, mut f: impl FnMut(f64, usize) -> f64) -> Result<Channel> {
    let rows = (duration * rate).round() as usize;
    let mut values = Vec::with_capacity(rows * dims);
    for i in 0..rows {
        let t = i as f64 / rate;
        for d in 0..dims {
            values.push(f(t, d));
        }
    }
    Channel::uniform(name, rate, 0.0, values, dims)
}

pub fn synthetic_recordings(spec: &SyntheticSpec) -> Result<Vec<Recording>> {
    let problems = spec.problems();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).expect("finite std");
    let tag = spec.dataset.as_str();
    let mut out = Vec::new();
    for class in &spec.classes {
        for r in 0..spec.recordings_per_class {
            let mut rng = seed::derived_rng(spec.seed, &[tag, &class.terrain, &r.to_string()]);
            let phases: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
            let gains: Vec<f64> = (0..6).map(|_| rng.gen_range(0.5..1.5)).collect();
            let w = 2.0 * std::f64::consts::PI * class.frequency;
            let sigma = spec.noise_std;
            let imu = channel("imu", spec.imu_rate, spec.duration, 6, |t, d| {
                spec.amplitude * gains[d] * (w * t + phases[d]).sin() + if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 }
            })?;
            let cruise: [f64; 4] = [2.0, 2.0, 0.5, 0.5];
            let wheel = channel("wheel", spec.wheel_rate, spec.duration, 4, |_, d| {
                cruise[d] + if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 }
            })?;
            let commands = channel("commands", spec.wheel_rate, spec.duration, COMMAND_COMPONENTS.len(), |t, d| {
                if d == 0 { 0.5 } else { 0.2 * (0.1 * t).sin() }
            })?;
            out.push(Recording::new(
                format!("{tag}/{}/{r:02}", class.terrain),
                TerrainLabel::new(&class.terrain),
                spec.dataset,
                imu,
                wheel,
                Some(commands),
            )?);
        }
    }
    Ok(out)
}
