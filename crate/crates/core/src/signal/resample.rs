use super::Channel;
use crate::error::{Error, Result};

/// Linearly interpolates `ch` onto a uniform grid at `target_rate`.
///
/// The grid starts at the first input timestamp and keeps every tick that
/// does not pass the last one. No anti-alias filtering is applied.
pub fn resample_channel(ch: &Channel, target_rate: f64) -> Result<Channel> {
    if !(target_rate.is_finite() && target_rate > 0.0) {
        return Err(Error::Config(format!("target rate must be positive, got {target_rate}")));
    }
    if ch.len() < 2 {
        return Err(Error::Empty(format!("{}: need at least 2 samples to resample", ch.name)));
    }
    let ts = ch.timestamps();
    let t0 = ts[0];
    let span = ts[ts.len() - 1] - t0;
    let period = 1.0 / target_rate;
    if span < period {
        return Err(Error::Insufficient(format!(
            "{}: span {span:.4} s is shorter than one output tick ({period:.4} s)",
            ch.name
        )));
    }
    // Ticks land on the last timestamp up to rounding, keep those.
    let count = (span * target_rate + 1e-9).floor() as usize + 1;
    let dims = ch.dims();
    let mut values = Vec::with_capacity(count * dims);
    let mut seg = 0;
    for i in 0..count {
        let t = (t0 + i as f64 * period).min(ts[ts.len() - 1]);
        while seg + 2 < ts.len() && ts[seg + 1] <= t {
            seg += 1;
        }
        let (ta, tb) = (ts[seg], ts[seg + 1]);
        let frac = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        let (ra, rb) = (ch.row(seg), ch.row(seg + 1));
        values.extend(ra.iter().zip(rb).map(|(a, b)| a + frac * (b - a)));
    }
    Channel::uniform(ch.name.clone(), target_rate, t0, values, dims)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(rate: f64, n: usize) -> Channel {
        let vals = (0..n).map(|i| 2.0 * i as f64 / rate).collect();
        Channel::uniform("ramp", rate, 0.0, vals, 1).unwrap()
    }

    #[test]
    fn halving_rate_halves_rows() {
        let ch = Channel::uniform("imu", 100.0, 0.0, vec![1.0; 500 * 6], 6).unwrap();
        let out = resample_channel(&ch, 50.0).unwrap();
        assert_eq!(out.len(), 250);
        assert_eq!(out.rate, 50.0);
    }

    #[test]
    fn constant_signal_stays_constant() {
        let ch = Channel::uniform("c", 100.0, 3.0, vec![4.25; 300], 1).unwrap();
        for rate in [6.5, 15.0, 50.0, 333.0] {
            let out = resample_channel(&ch, rate).unwrap();
            assert!(out.values().iter().all(|&v| v == 4.25));
        }
    }

    #[test]
    fn ramp_is_reproduced() {
        let out = resample_channel(&ramp(100.0, 500), 50.0).unwrap();
        let idx = out.timestamps().iter().position(|&t| (t - 1.3).abs() < 1e-9).unwrap();
        assert!((out.row(idx)[0] - 2.6).abs() < 1e-9);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let one = Channel::uniform("x", 10.0, 0.0, vec![1.0], 1).unwrap();
        assert!(matches!(resample_channel(&one, 5.0), Err(Error::Empty(_))));
        let short = Channel::uniform("x", 100.0, 0.0, vec![1.0, 2.0], 1).unwrap();
        assert!(matches!(resample_channel(&short, 6.5), Err(Error::Insufficient(_))));
    }

    proptest! {
        #[test]
        fn affine_signals_are_exact(
            a in -5.0f64..5.0, b in -5.0f64..5.0,
            rate in 5.0f64..200.0, target in 5.0f64..200.0,
            jitter in proptest::collection::vec(0.0f64..0.4, 40..120),
        ) {
            let mut t = 0.0;
            let mut ts = Vec::new();
            for j in &jitter {
                ts.push(t);
                t += (1.0 + j) / rate;
            }
            let vals: Vec<f64> = ts.iter().map(|t| a + b * t).collect();
            let ch = Channel::new("aff", rate, ts, vals, 1).unwrap();
            if let Ok(out) = resample_channel(&ch, target) {
                for (t, v) in out.timestamps().iter().zip(out.values()) {
                    prop_assert!((v - (a + b * t)).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn idempotent_on_uniform_input(
            rate in 5.0f64..200.0,
            vals in proptest::collection::vec(-10.0f64..10.0, 10..200),
        ) {
            let ch = Channel::uniform("u", rate, 0.5, vals.clone(), 1).unwrap();
            let out = resample_channel(&ch, rate).unwrap();
            prop_assert_eq!(out.len(), ch.len());
            for (x, y) in out.values().iter().zip(&vals) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
