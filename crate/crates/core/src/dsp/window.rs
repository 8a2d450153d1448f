use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HAMMING_A0: f64 = 0.54;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hamming,
    Boxcar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub kind: WindowKind,
    /// Generalized-cosine coefficient; ignored by the boxcar window.
    pub a0: f64,
    /// Samples per window.
    pub n_win: usize,
}

impl WindowSpec {
    pub fn hamming(n_win: usize) -> Self {
        WindowSpec { kind: WindowKind::Hamming, a0: HAMMING_A0, n_win }
    }

    pub fn boxcar(n_win: usize) -> Self {
        WindowSpec { kind: WindowKind::Boxcar, a0: 1.0, n_win }
    }
}

/// `w[n] = a0 − (1 − a0)·cos(2πn / N_win)` for `0 ≤ n ≤ N_win`, i.e.
/// `N_win + 1` coefficients. A frame of `N_win` samples uses the first
/// `N_win` of them.
pub fn window_coefficients(spec: &WindowSpec) -> Result<Vec<f64>> {
    if spec.n_win < 2 {
        return Err(Error::Config(format!("window needs at least 2 samples, got {}", spec.n_win)));
    }
    let n = spec.n_win;
    match spec.kind {
        WindowKind::Boxcar => Ok(vec![1.0; n + 1]),
        WindowKind::Hamming => {
            if !(spec.a0 > 0.5 && spec.a0 <= 1.0) {
                return Err(Error::Config(format!("a0 must lie in (0.5, 1], got {}", spec.a0)));
            }
            let mut w: Vec<f64> = (0..=n)
                .map(|i| spec.a0 - (1.0 - spec.a0) * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect();
            // cos is not exactly even in floating point; mirror the first half.
            for i in 0..=n / 2 {
                w[n - i] = w[i];
            }
            Ok(w)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hamming_endpoints_and_center() {
        for n in [2usize, 3, 20, 40, 64] {
            let w = window_coefficients(&WindowSpec::hamming(n)).unwrap();
            assert_eq!(w.len(), n + 1);
            assert!((w[0] - 0.08).abs() < 1e-15);
            assert!((w[n] - 0.08).abs() < 1e-15);
            if n % 2 == 0 {
                assert!((w[n / 2] - 1.0).abs() < 1e-15);
            }
            for i in 0..=n {
                assert_eq!(w[i], w[n - i]);
            }
        }
    }

    #[test]
    fn boxcar_is_flat() {
        assert!(window_coefficients(&WindowSpec::boxcar(7)).unwrap().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rejects_tiny_windows_and_bad_a0() {
        assert!(window_coefficients(&WindowSpec::hamming(1)).is_err());
        let bad = WindowSpec { a0: 0.4, ..WindowSpec::hamming(8) };
        assert!(window_coefficients(&bad).is_err());
    }
}
