//! Result files: delimiter-separated tables and JSON.

use std::path::Path;

use serde::Serialize;

use super::ablation::AblationOutcome;
use super::cv::{ClassSummary, CvReport};
use crate::error::{Error, Result};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    model: &'a str,
    terrain: &'a str,
    precision_pct: String,
    recall_pct: String,
    f1_pct: String,
    accuracy_pct: String,
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn write_metrics(path: &Path, model: &str, rows: &[ClassSummary], accuracy: f64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(MetricsRow {
            model,
            terrain: &r.terrain,
            precision_pct: pct(r.precision),
            recall_pct: pct(r.recall),
            f1_pct: pct(r.f1),
            accuracy_pct: pct(accuracy),
        })?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))
}

/// Writes `metrics.csv` (terrain × precision/recall/F1/accuracy, in %),
/// `metrics_raw.csv`, `folds.csv`, one `confusion_fold<k>.csv` per fold
/// and `results.json` into `dir`.
pub fn write_cv_report(dir: &Path, report: &CvReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let model = report.model.as_str();
    write_metrics(&dir.join("metrics.csv"), model, &report.per_class, report.mean_accuracy)?;
    write_metrics(&dir.join("metrics_raw.csv"), model, &report.raw_per_class, report.raw_mean_accuracy)?;

    let path = dir.join("folds.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["fold", "accuracy_pct", "raw_accuracy_pct", "train_partitions", "train_samples", "test_partitions", "best_epoch"])?;
    for f in &report.folds {
        w.write_record([
            f.fold.to_string(),
            pct(f.metrics.accuracy),
            pct(f.raw_metrics.accuracy),
            f.train_partitions.to_string(),
            f.train_samples.to_string(),
            f.test_partitions.to_string(),
            f.best_epoch.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;

    for f in &report.folds {
        let path = dir.join(format!("confusion_fold{}.csv", f.fold));
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(report.classes.iter().cloned());
        w.write_record(&header)?;
        for (name, row) in report.classes.iter().zip(f.confusion.rows()) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    write_json(&dir.join("results.json"), report)
}

/// Writes `ablation.csv` (model, ratio, N, error %, IQR) and `ablation.json`.
pub fn write_ablation_report(dir: &Path, outcome: &AblationOutcome) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let path = dir.join("ablation.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["model", "ratio", "train_partitions", "error_pct", "iqr_low_pct", "iqr_high_pct"])?;
    for p in &outcome.points {
        w.write_record([
            p.model.to_string(),
            p.ratio.to_string(),
            format!("{:.1}", p.train_partitions),
            format!("{:.3}", p.error_pct),
            format!("{:.3}", p.iqr_pct.0),
            format!("{:.3}", p.iqr_pct.1),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    write_json(&dir.join("ablation.json"), outcome)
}
