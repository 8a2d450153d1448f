use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::stft::{spectrogram, Spectrogram, StftConfig};
use crate::error::{Error, Result};
use crate::pipeline::Sample;
use crate::signal::{IMU_COMPONENTS, WHEEL_COMPONENTS};

/// Channel order of the stacked CNN input: the six IMU components, then the
/// four wheel components.
pub const COMPONENT_ORDER: [&str; 10] = [
    IMU_COMPONENTS[0],
    IMU_COMPONENTS[1],
    IMU_COMPONENTS[2],
    IMU_COMPONENTS[3],
    IMU_COMPONENTS[4],
    IMU_COMPONENTS[5],
    WHEEL_COMPONENTS[0],
    WHEEL_COMPONENTS[1],
    WHEEL_COMPONENTS[2],
    WHEEL_COMPONENTS[3],
];

/// `channels × f_max × t_max` magnitudes; each channel's own spectrogram
/// occupies its top-left `extents[c]` block, the rest is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelSpectrogram {
    pub channels: usize,
    pub f_max: usize,
    pub t_max: usize,
    pub extents: Vec<(usize, usize)>,
    pub values: Vec<f64>,
}

impl MultiChannelSpectrogram {
    pub fn at(&self, c: usize, f: usize, t: usize) -> f64 {
        self.values[(c * self.f_max + f) * self.t_max + t]
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.f_max, self.t_max]
    }

    fn from_spectrograms(specs: &[Spectrogram]) -> Self {
        let f_max = specs.iter().map(|s| s.freq_bins).max().unwrap_or(0);
        let t_max = specs.iter().map(|s| s.frames).max().unwrap_or(0);
        let mut values = vec![0.0; specs.len() * f_max * t_max];
        for (c, s) in specs.iter().enumerate() {
            for f in 0..s.freq_bins {
                let dst = (c * f_max + f) * t_max;
                values[dst..dst + s.frames].copy_from_slice(&s.values[f * s.frames..(f + 1) * s.frames]);
            }
        }
        MultiChannelSpectrogram {
            channels: specs.len(),
            f_max,
            t_max,
            extents: specs.iter().map(|s| (s.freq_bins, s.frames)).collect(),
            values,
        }
    }
}

/// Spectrograms of arbitrary `(name, signal, rate)` components, padded and stacked.
pub fn assemble_components(components: &[(&str, &[f64], f64)], cfg: &StftConfig) -> Result<MultiChannelSpectrogram> {
    if components.is_empty() {
        return Err(Error::Empty("no components to assemble".into()));
    }
    let specs = components
        .iter()
        .map(|(name, x, rate)| spectrogram(name, x, *rate, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiChannelSpectrogram::from_spectrograms(&specs))
}

/// CNN input for one sample, components in [`COMPONENT_ORDER`], each at its
/// native rate.
pub fn assemble_input(sample: &Sample, cfg: &StftConfig) -> Result<MultiChannelSpectrogram> {
    let imu: Vec<Vec<f64>> = (0..sample.imu.dims()).map(|d| sample.imu.component(d)).collect();
    let wheel: Vec<Vec<f64>> = (0..sample.wheel.dims()).map(|d| sample.wheel.component(d)).collect();
    let mut comps: Vec<(&str, &[f64], f64)> = Vec::with_capacity(COMPONENT_ORDER.len());
    for (d, x) in imu.iter().enumerate() {
        comps.push((IMU_COMPONENTS[d], x, sample.imu.rate));
    }
    for (d, x) in wheel.iter().enumerate() {
        comps.push((WHEEL_COMPONENTS[d], x, sample.wheel.rate));
    }
    assemble_components(&comps, cfg)
}

/// Text dump: a `channels f_max t_max` header line, then one line per
/// `(channel, frequency)` row with `t_max` values.
pub fn write_spectrogram_dump(path: &Path, spec: &MultiChannelSpectrogram) -> Result<()> {
    let mut out = format!("{} {} {}\n", spec.channels, spec.f_max, spec.t_max);
    for row in spec.values.chunks(spec.t_max.max(1)) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_spectrogram_dump(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines();
    let bad = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line, message };
    let shape: Vec<usize> = lines
        .next()
        .ok_or_else(|| bad(1, "missing header".into()))?
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| bad(1, format!("bad dimension `{s}`"))))
        .collect::<Result<_>>()?;
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        for tok in line.split_whitespace() {
            values.push(tok.parse().map_err(|_| bad(i + 2, format!("bad value `{tok}`")))?);
        }
    }
    if values.len() != shape.iter().product::<usize>() {
        return Err(bad(0, format!("{} values for shape {shape:?}", values.len())));
    }
    Ok((shape, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{Channel, DatasetTag, TerrainLabel};
    use rand::Rng;

    fn sample(imu_rate: f64, wheel_rate: f64) -> Sample {
        let mut rng = crate::seed::rng(4);
        let ni = (1.7 * imu_rate).round() as usize;
        let nw = (1.7 * wheel_rate).round() as usize;
        Sample {
            partition_id: "p".into(),
            terrain: TerrainLabel::new("snow"),
            dataset: DatasetTag::Other,
            offset: 0.0,
            imu: Channel::uniform("imu", imu_rate, 0.0, (0..ni * 6).map(|_| rng.gen_range(-1.0..1.0)).collect(), 6).unwrap(),
            wheel: Channel::uniform("wheel", wheel_rate, 0.0, (0..nw * 4).map(|_| rng.gen_range(-1.0..1.0)).collect(), 4).unwrap(),
        }
    }

    #[test]
    fn multi_rate_shape_and_padding() {
        let s = sample(50.0, 6.5);
        let cfg = StftConfig::default();
        let m = assemble_input(&s, &cfg).unwrap();
        assert_eq!(m.shape(), [10, 11, 7]);
        assert_eq!(m.extents[0], (11, 7));
        assert_eq!(m.extents[9], (2, 5));
        for c in 0..10 {
            let (fe, te) = m.extents[c];
            let own = if c < 6 {
                spectrogram("x", &s.imu.component(c), 50.0, &cfg).unwrap()
            } else {
                spectrogram("x", &s.wheel.component(c - 6), 6.5, &cfg).unwrap()
            };
            for f in 0..m.f_max {
                for t in 0..m.t_max {
                    if f < fe && t < te {
                        assert_eq!(m.at(c, f, t), own.at(f, t));
                    } else {
                        assert_eq!(m.at(c, f, t), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn single_channel_padding_is_identity() {
        let x: Vec<f64> = (0..85).map(|i| (i as f64 * 0.3).sin()).collect();
        let cfg = StftConfig::default();
        let m = assemble_components(&[("x", &x, 50.0)], &cfg).unwrap();
        assert_eq!(m.values, spectrogram("x", &x, 50.0, &cfg).unwrap().values);
    }

    #[test]
    fn permuting_components_permutes_slices() {
        let a: Vec<f64> = (0..85).map(|i| (i as f64 * 0.3).sin()).collect();
        let b: Vec<f64> = (0..11).map(|i| i as f64).collect();
        let cfg = StftConfig::default();
        let ab = assemble_components(&[("a", &a, 50.0), ("b", &b, 6.5)], &cfg).unwrap();
        let ba = assemble_components(&[("b", &b, 6.5), ("a", &a, 50.0)], &cfg).unwrap();
        let plane = ab.f_max * ab.t_max;
        assert_eq!(ab.values[..plane], ba.values[plane..]);
        assert_eq!(ab.values[plane..], ba.values[..plane]);
    }

    #[test]
    fn too_short_component_fails() {
        let cfg = StftConfig::default();
        assert!(assemble_components(&[("x", &[0.0; 5], 50.0)], &cfg).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let m = assemble_input(&sample(50.0, 15.0), &StftConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.txt");
        write_spectrogram_dump(&path, &m).unwrap();
        let (shape, values) = read_spectrogram_dump(&path).unwrap();
        assert_eq!(shape, m.shape().to_vec());
        assert_eq!(values, m.values);
    }
}
