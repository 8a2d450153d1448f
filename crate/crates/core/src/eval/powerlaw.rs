use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `ln(error) = intercept + slope · ln(N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub intercept: f64,
    pub slope: f64,
    /// Euclidean norm of the log-space residuals.
    pub residual_norm: f64,
    pub points: usize,
}

impl PowerLawFit {
    pub fn predict(&self, n: f64) -> f64 {
        (self.intercept + self.slope * n.ln()).exp()
    }
}

/// Ordinary least squares on `(ln N, ln error)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(Error::Insufficient(format!("power-law fit needs ≥ 3 points, got {}", points.len())));
    }
    if let Some(&(n, e)) = points.iter().find(|(n, e)| !(*n > 0.0 && *e > 0.0 && n.is_finite() && e.is_finite())) {
        return Err(Error::Degenerate(format!("power-law point (N={n}, error={e}) is not strictly positive")));
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| n.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, e)| e.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all points share the same N".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual_norm = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>().sqrt();
    Ok(PowerLawFit { intercept, slope, residual_norm, points: points.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_inverse_law() {
        let pts: Vec<(f64, f64)> = [10.0, 20.0, 40.0, 80.0].iter().map(|&n| (n, 10.0 / n)).collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!((fit.intercept - 10f64.ln()).abs() < 1e-12);
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!(fit.residual_norm < 1e-12);
        assert!((fit.predict(5.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn preconditions() {
        assert!(matches!(fit_power_law(&[(1.0, 1.0), (2.0, 0.5)]), Err(Error::Insufficient(_))));
        assert!(matches!(fit_power_law(&[(1.0, 1.0), (2.0, 0.0), (4.0, 0.2)]), Err(Error::Degenerate(_))));
        assert!(matches!(fit_power_law(&[(1.0, 1.0), (2.0, -1.0), (4.0, 0.2)]), Err(Error::Degenerate(_))));
    }
}
