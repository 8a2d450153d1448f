//! Spectral-leakage measurements used to compare window functions.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::window::WindowKind;

/// Main-lobe half width in DFT bins (first null).
pub fn main_lobe_half_width(kind: WindowKind) -> f64 {
    match kind {
        WindowKind::Boxcar => 1.0,
        WindowKind::Hamming => 2.0,
    }
}

/// Dense one-sided magnitude spectrum of `x` (zero-padded by `oversample`),
/// in dB relative to its maximum.
pub fn window_response_db(x: &[f64], oversample: usize) -> Vec<f64> {
    let n = x.len() * oversample.max(1);
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(n, Complex64::new(0.0, 0.0));
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    let mags: Vec<f64> = buf[..=n / 2].iter().map(|z| z.norm()).collect();
    let peak = mags.iter().copied().fold(0.0, f64::max);
    mags.iter().map(|m| 20.0 * (m / peak).max(1e-300).log10()).collect()
}

/// Highest level outside the main lobe of a dense dB spectrum. The main
/// lobe spans from the global peak down to the nearest local minimum on
/// each side.
pub fn max_sidelobe_db(db: &[f64]) -> f64 {
    let peak = db
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(i, _)| i);
    let mut lo = peak;
    while lo > 0 && db[lo - 1] < db[lo] {
        lo -= 1;
    }
    let mut hi = peak;
    while hi + 1 < db.len() && db[hi + 1] < db[hi] {
        hi += 1;
    }
    db[..lo]
        .iter()
        .chain(&db[hi + 1..])
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        - db[peak]
}

/// Fraction of one-sided spectral energy outside `|k − center| ≤ half_width`.
pub fn leakage_fraction(magnitudes: &[f64], center_bin: f64, half_width: f64) -> f64 {
    let (mut inside, mut total) = (0.0, 0.0);
    for (k, m) in magnitudes.iter().enumerate() {
        let e = m * m;
        total += e;
        if (k as f64 - center_bin).abs() <= half_width {
            inside += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        (total - inside) / total
    }
}

/// Sinusoid helper for leakage experiments: `sin(2π f n / rate + phase)`.
pub fn tone(len: usize, freq: f64, rate: f64, phase: f64) -> Vec<f64> {
    (0..len).map(|n| (2.0 * PI * freq * n as f64 / rate + phase).sin()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{window_coefficients, WindowSpec};

    #[test]
    fn classical_sidelobe_levels() {
        let n = 64;
        let ham = window_coefficients(&WindowSpec::hamming(n)).unwrap();
        let boxcar = window_coefficients(&WindowSpec::boxcar(n)).unwrap();
        let h = max_sidelobe_db(&window_response_db(&ham[..n], 32));
        let b = max_sidelobe_db(&window_response_db(&boxcar[..n], 32));
        assert!(h <= -40.0, "hamming sidelobe {h}");
        assert!((-14.0..=-13.0).contains(&b), "boxcar sidelobe {b}");
    }

    #[test]
    fn off_bin_tone_leaks_less_with_hamming() {
        let n = 64;
        let x = tone(n, 10.37, 64.0, 0.3);
        let ham = window_coefficients(&WindowSpec::hamming(n)).unwrap();
        let windowed: Vec<f64> = x.iter().zip(&ham).map(|(a, b)| a * b).collect();
        let h = max_sidelobe_db(&window_response_db(&windowed, 32));
        let b = max_sidelobe_db(&window_response_db(&x, 32));
        assert!(h <= -40.0 && b >= -14.0 && h < b, "{h} vs {b}");
    }
}
