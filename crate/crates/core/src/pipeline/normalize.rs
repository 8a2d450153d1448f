use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};
use crate::signal::Channel;

/// Per-component `(min, max)` of each channel group over training samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub imu: Vec<(f64, f64)>,
    pub wheel: Vec<(f64, f64)>,
}

fn extend_ranges(ranges: &mut [(f64, f64)], ch: &Channel) {
    for t in 0..ch.len() {
        for (r, &v) in ranges.iter_mut().zip(ch.row(t)) {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
    }
}

pub fn fit_normalization<'a>(train: impl IntoIterator<Item = &'a Sample>) -> Result<NormalizationStats> {
    let mut it = train.into_iter().peekable();
    let first = it.peek().ok_or_else(|| Error::Empty("no training samples to fit normalization".into()))?;
    let mut stats = NormalizationStats {
        imu: vec![(f64::INFINITY, f64::NEG_INFINITY); first.imu.dims()],
        wheel: vec![(f64::INFINITY, f64::NEG_INFINITY); first.wheel.dims()],
    };
    for s in it {
        extend_ranges(&mut stats.imu, &s.imu);
        extend_ranges(&mut stats.wheel, &s.wheel);
    }
    Ok(stats)
}

fn scale(ch: &Channel, ranges: &[(f64, f64)]) -> Result<Channel> {
    if ranges.len() != ch.dims() {
        return Err(Error::Shape(format!(
            "{}: {} components, normalization fitted on {}",
            ch.name,
            ch.dims(),
            ranges.len()
        )));
    }
    let values = ch
        .values()
        .chunks(ch.dims())
        .flat_map(|row| {
            row.iter().zip(ranges).map(|(&v, &(lo, hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
        })
        .collect();
    Channel::new(ch.name.clone(), ch.rate, ch.timestamps().to_vec(), values, ch.dims())
}

/// Min-max scaling with the fitted ranges; unseen values are not clipped and
/// constant components map to zero.
pub fn apply_normalization(sample: &Sample, stats: &NormalizationStats) -> Result<Sample> {
    Ok(Sample {
        imu: scale(&sample.imu, &stats.imu)?,
        wheel: scale(&sample.wheel, &stats.wheel)?,
        ..sample.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{DatasetTag, TerrainLabel};
    use proptest::prelude::*;

    fn sample(imu: Vec<f64>, wheel: Vec<f64>) -> Sample {
        Sample {
            partition_id: "p".into(),
            terrain: TerrainLabel::new("ice"),
            dataset: DatasetTag::Other,
            offset: 0.0,
            imu: Channel::uniform("imu", 10.0, 0.0, imu, 6).unwrap(),
            wheel: Channel::uniform("wheel", 1.0, 0.0, wheel, 4).unwrap(),
        }
    }

    #[test]
    fn contract_cases() {
        let train = sample(
            [[2.0, 0.0, 5.0, 0.0, 0.0, 0.0], [10.0, 1.0, 5.0, 0.0, 0.0, 0.0]].concat(),
            vec![0.0; 8],
        );
        let stats = fit_normalization([&train]).unwrap();
        let test = sample([6.0, 1.5, 7.0, 0.0, 0.0, 0.0].to_vec(), vec![3.0; 4]);
        let out = apply_normalization(&test, &stats).unwrap();
        assert_eq!(out.imu.row(0)[..3], [0.5, 1.5, 0.0]);
        assert!(out.wheel.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_training_set() {
        assert!(matches!(fit_normalization(std::iter::empty::<&Sample>()), Err(Error::Empty(_))));
    }

    proptest! {
        #[test]
        fn train_maps_into_unit_range(vals in proptest::collection::vec(-1e3f64..1e3, 60..120)) {
            let n = vals.len() / 6 * 6;
            let a = sample(vals[..n].to_vec(), vals[..4].to_vec());
            let b = sample(vals[..n].iter().rev().map(|v| v * 0.5 + 1.0).collect(), vals[4..8].to_vec());
            let stats = fit_normalization([&a, &b]).unwrap();
            for s in [&a, &b] {
                let out = apply_normalization(s, &stats).unwrap();
                for v in out.imu.values().iter().chain(out.wheel.values()) {
                    prop_assert!(*v >= -1e-12 && *v <= 1.0 + 1e-12);
                }
            }
        }
    }
}
