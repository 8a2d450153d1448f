use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::window::{window_coefficients, WindowKind, WindowSpec, HAMMING_A0};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftConfig {
    /// Seconds per analysis window.
    pub window_duration: f64,
    /// Seconds shared by consecutive windows.
    pub overlap_duration: f64,
    pub window: WindowKind,
    pub a0: f64,
    /// Use `ln(1 + |X|)` instead of `|X|`.
    pub log_magnitude: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            window_duration: 0.4,
            overlap_duration: 0.2,
            window: WindowKind::Hamming,
            a0: HAMMING_A0,
            log_magnitude: false,
        }
    }
}

impl StftConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.window_duration > 0.0) {
            out.push("stft.window_duration must be positive".to_string());
        }
        if !(self.overlap_duration >= 0.0 && self.overlap_duration < self.window_duration) {
            out.push("stft.overlap_duration must lie in [0, window_duration)".to_string());
        }
        if self.window == WindowKind::Hamming && !(self.a0 > 0.5 && self.a0 <= 1.0) {
            out.push("stft.a0 must lie in (0.5, 1]".to_string());
        }
        out
    }

    /// Window spec for a channel sampled at `rate`: `N_win = max(2, round(d·rate))`.
    pub fn window_spec(&self, rate: f64) -> WindowSpec {
        let n_win = ((self.window_duration * rate).round() as usize).max(2);
        WindowSpec { kind: self.window, a0: self.a0, n_win }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameGeometry {
    pub n_win: usize,
    pub hop: usize,
    pub frames: usize,
    pub bins: usize,
}

/// Frame arithmetic for a signal of `len` samples at `rate`.
pub fn frame_geometry(len: usize, rate: f64, cfg: &StftConfig) -> Result<FrameGeometry> {
    let n_win = cfg.window_spec(rate).n_win;
    let overlap = (cfg.overlap_duration * rate).round() as usize;
    if overlap >= n_win {
        return Err(Error::Config(format!(
            "overlap of {overlap} samples leaves no hop for a {n_win}-sample window at {rate} Hz"
        )));
    }
    let hop = n_win - overlap;
    if len < n_win {
        return Err(Error::Insufficient(format!(
            "signal of {len} samples is shorter than one {n_win}-sample window"
        )));
    }
    Ok(FrameGeometry { n_win, hop, frames: (len - n_win) / hop + 1, bins: n_win / 2 + 1 })
}

/// One-sided STFT, `bins × frames` in frequency-major order.
pub fn stft(signal: &[f64], rate: f64, cfg: &StftConfig) -> Result<(FrameGeometry, Vec<Complex64>)> {
    let g = frame_geometry(signal.len(), rate, cfg)?;
    let window = window_coefficients(&cfg.window_spec(rate))?;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(g.n_win);
    let mut out = vec![Complex64::new(0.0, 0.0); g.bins * g.frames];
    let mut buf = vec![Complex64::new(0.0, 0.0); g.n_win];
    for t in 0..g.frames {
        let frame = &signal[t * g.hop..t * g.hop + g.n_win];
        for ((b, &x), &w) in buf.iter_mut().zip(frame).zip(&window) {
            *b = Complex64::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for k in 0..g.bins {
            out[k * g.frames + t] = buf[k];
        }
    }
    Ok((g, out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub component: String,
    pub freq_bins: usize,
    pub frames: usize,
    /// Non-negative magnitudes, `freq_bins × frames` row-major.
    pub values: Vec<f64>,
}

impl Spectrogram {
    pub fn at(&self, f: usize, t: usize) -> f64 {
        self.values[f * self.frames + t]
    }
}

pub fn spectrogram(component: &str, signal: &[f64], rate: f64, cfg: &StftConfig) -> Result<Spectrogram> {
    let (g, x) = stft(signal, rate, cfg)?;
    let values = x
        .iter()
        .map(|z| if cfg.log_magnitude { z.norm().ln_1p() } else { z.norm() })
        .collect();
    Ok(Spectrogram { component: component.to_string(), freq_bins: g.bins, frames: g.frames, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::f64::consts::PI;

    fn naive_dft(x: &[f64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter().enumerate().fold(Complex64::new(0.0, 0.0), |acc, (j, &v)| {
                    acc + Complex64::from_polar(v, -2.0 * PI * (k * j) as f64 / n as f64)
                })
            })
            .collect()
    }

    #[test]
    fn frame_count_matches_enumeration() {
        let cfg = StftConfig::default();
        let g = frame_geometry(85, 50.0, &cfg).unwrap();
        assert_eq!((g.n_win, g.hop, g.bins), (20, 10, 11));
        let enumerated = (0..).map(|t| t * g.hop).take_while(|s| s + g.n_win <= 85).count();
        assert_eq!(g.frames, enumerated);
        assert_eq!(g.frames, 7);

        let w = frame_geometry(11, 6.5, &cfg).unwrap();
        assert_eq!((w.n_win, w.hop, w.frames, w.bins), (3, 2, 5, 2));
    }

    #[test]
    fn short_signal_is_rejected() {
        assert!(matches!(stft(&[0.0; 10], 50.0, &StftConfig::default()), Err(Error::Insufficient(_))));
    }

    #[test]
    fn bin_centered_tone_with_boxcar_is_concentrated() {
        let cfg = StftConfig { window: WindowKind::Boxcar, ..Default::default() };
        let rate = 50.0;
        let k = 3.0;
        let f = k * rate / 20.0;
        let x: Vec<f64> = (0..85).map(|n| (2.0 * PI * f * n as f64 / rate).sin()).collect();
        let s = spectrogram("x", &x, rate, &cfg).unwrap();
        for t in 0..s.frames {
            let peak = s.at(3, t);
            for b in (0..s.freq_bins).filter(|&b| b != 3) {
                assert!(s.at(b, t) < 1e-9 * peak);
            }
        }
    }

    #[test]
    fn matches_naive_dft_per_frame() {
        let mut rng = crate::seed::rng(11);
        for _ in 0..10 {
            let len = rng.gen_range(40..512);
            let rate = rng.gen_range(20.0..120.0);
            let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cfg = StftConfig::default();
            let (g, out) = stft(&x, rate, &cfg).unwrap();
            let w = window_coefficients(&cfg.window_spec(rate)).unwrap();
            for t in 0..g.frames {
                let frame: Vec<f64> = (0..g.n_win).map(|j| x[t * g.hop + j] * w[j]).collect();
                let reference = naive_dft(&frame);
                let scale = reference.iter().map(|z| z.norm()).fold(0.0, f64::max);
                for k in 0..g.bins {
                    assert!((out[k * g.frames + t] - reference[k]).norm() <= 1e-9 * scale);
                }
            }
        }
    }

    #[test]
    fn parseval_on_a_boxcar_frame() {
        let mut rng = crate::seed::rng(2);
        let cfg = StftConfig { window: WindowKind::Boxcar, ..Default::default() };
        for n in [20usize, 21] {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (g, out) = stft(&x, 50.0 * n as f64 / 20.0, &cfg).unwrap();
            assert_eq!(g.n_win, n);
            // Rebuild the two-sided energy from the one-sided bins.
            let energy: f64 = (0..g.bins)
                .map(|k| {
                    let mirrored = k != 0 && !(n % 2 == 0 && k == n / 2);
                    out[k].norm_sqr() * if mirrored { 2.0 } else { 1.0 }
                })
                .sum();
            let mean_square = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
            let expected = (n * n) as f64 * mean_square;
            assert!((energy - expected).abs() <= 1e-9 * expected);
        }
    }
}
