use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{iqr, run_cross_validation, with_workers, CvConfig};
use super::powerlaw::{fit_power_law, PowerLawFit};
use crate::error::{Error, Result};
use crate::models::ModelKind;
use crate::signal::{LabelSpace, Recording};

pub const ABLATION_RATIOS: [f64; 5] = [1.0, 0.5, 0.25, 0.125, 0.0625];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub model: ModelKind,
    pub ratio: f64,
    /// Mean over folds of the distinct training partitions kept.
    pub train_partitions: f64,
    /// Mean fold test error in percent.
    pub error_pct: f64,
    /// 25th and 75th percentiles of fold error in percent.
    pub iqr_pct: (f64, f64),
    pub fold_errors_pct: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTrend {
    pub model: ModelKind,
    /// Absent when the points do not admit a fit (e.g. a zero error).
    pub fit: Option<PowerLawFit>,
    pub fit_error: Option<String>,
    /// Adjacent size steps where error rose with more data and the fold
    /// IQRs do not overlap.
    pub significant_inversions: usize,
    /// Adjacent size steps where error rose at all.
    pub inversions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationOutcome {
    pub dataset: String,
    pub points: Vec<AblationPoint>,
    pub trends: Vec<ModelTrend>,
}

fn trend(model: ModelKind, points: &[&AblationPoint]) -> ModelTrend {
    let mut sorted: Vec<&AblationPoint> = points.to_vec();
    sorted.sort_by(|a, b| a.train_partitions.total_cmp(&b.train_partitions));
    let mut inversions = 0;
    let mut significant_inversions = 0;
    for w in sorted.windows(2) {
        let (small, large) = (w[0], w[1]);
        if large.error_pct > small.error_pct {
            inversions += 1;
            if large.iqr_pct.0 > small.iqr_pct.1 {
                significant_inversions += 1;
            }
        }
    }
    let pts: Vec<(f64, f64)> = sorted.iter().map(|p| (p.train_partitions, p.error_pct)).collect();
    let (fit, fit_error) = match fit_power_law(&pts) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    ModelTrend { model, fit, fit_error, significant_inversions, inversions }
}

/// Full cross-validation at every `(model, ratio)` pair, run in parallel.
pub fn run_ablation(
    recs: &[Recording],
    space: &LabelSpace,
    dataset: &str,
    models: &[ModelKind],
    ratios: &[f64],
    cfg: &CvConfig,
) -> Result<AblationOutcome> {
    if ratios.is_empty() || models.is_empty() {
        return Err(Error::Config("ablation needs at least one model and one ratio".into()));
    }
    let jobs: Vec<(ModelKind, f64)> = models.iter().flat_map(|&m| ratios.iter().map(move |&r| (m, r))).collect();
    let points: Vec<AblationPoint> = with_workers(cfg.workers, || {
        jobs.par_iter()
            .map(|&(model, ratio)| {
                let run_cfg = CvConfig { decimation: ratio, workers: 0, ..cfg.clone() };
                let report = run_cross_validation(recs, space, dataset, model, &run_cfg)?;
                let fold_errors_pct: Vec<f64> = report.folds.iter().map(|f| 100.0 * (1.0 - f.metrics.accuracy)).collect();
                let (q25, q75) = iqr(&fold_errors_pct);
                Ok(AblationPoint {
                    model,
                    ratio,
                    train_partitions: report.folds.iter().map(|f| f.train_partitions as f64).sum::<f64>()
                        / report.folds.len() as f64,
                    error_pct: 100.0 * (1.0 - report.mean_accuracy),
                    iqr_pct: (q25, q75),
                    fold_errors_pct,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let trends = models
        .iter()
        .map(|&m| trend(m, &points.iter().filter(|p| p.model == m).collect::<Vec<_>>()))
        .collect();
    Ok(AblationOutcome { dataset: dataset.to_string(), points, trends })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(n: f64, err: f64, spread: f64) -> AblationPoint {
        AblationPoint {
            model: ModelKind::Cnn,
            ratio: 1.0,
            train_partitions: n,
            error_pct: err,
            iqr_pct: (err - spread, err + spread),
            fold_errors_pct: vec![err],
        }
    }

    #[test]
    fn counts_inversions() {
        let pts = [pt(10.0, 20.0, 1.0), pt(20.0, 15.0, 1.0), pt(40.0, 15.5, 1.0), pt(80.0, 30.0, 1.0)];
        let t = trend(ModelKind::Cnn, &pts.iter().collect::<Vec<_>>());
        assert_eq!(t.inversions, 2);
        assert_eq!(t.significant_inversions, 1);
        assert!(t.fit.is_some());
    }

    #[test]
    fn zero_error_has_no_fit() {
        let pts = [pt(10.0, 2.0, 0.0), pt(20.0, 1.0, 0.0), pt(40.0, 0.0, 0.0)];
        let t = trend(ModelKind::Mamba, &pts.iter().collect::<Vec<_>>());
        assert!(t.fit.is_none() && t.fit_error.is_some());
    }
}
