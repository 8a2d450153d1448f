//! Vector-graphics figures for ablation and embedding results.

use std::path::Path;

use plotters::prelude::*;

use crate::embed::EmbeddingSet;
use crate::error::{Error, Result};
use crate::eval::AblationOutcome;
use crate::signal::DatasetTag;

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Plot(e.to_string())
}

fn padded_log_range(lo: f64, hi: f64) -> std::ops::Range<f64> {
    (lo / 1.5)..(hi * 1.5)
}

/// Test error vs. training partitions on log-log axes, one line per model,
/// with the fold IQR as a shaded band.
pub fn plot_ablation(path: &Path, outcome: &AblationOutcome) -> Result<()> {
    if outcome.points.is_empty() {
        return Err(Error::Empty("no ablation points to plot".into()));
    }
    let floor = 1e-2;
    let xs = outcome.points.iter().map(|p| p.train_partitions);
    let ys = outcome.points.iter().flat_map(|p| [p.error_pct, p.iqr_pct.0, p.iqr_pct.1]).map(|v| v.max(floor));
    let (x0, x1) = xs.fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));
    let (y0, y1) = ys.fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));

    let root = SVGBackend::new(path, (800, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("Training-set ablation ({})", outcome.dataset), ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(44)
        .y_label_area_size(56)
        .build_cartesian_2d(padded_log_range(x0, x1).log_scale(), padded_log_range(y0, y1).log_scale())
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("training partitions")
        .y_desc("test error (%)")
        .draw()
        .map_err(plot_err)?;

    let mut models: Vec<_> = outcome.points.iter().map(|p| p.model).collect();
    models.dedup();
    models.sort_by_key(|m| m.as_str());
    models.dedup();
    for (i, model) in models.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        let mut pts: Vec<_> = outcome.points.iter().filter(|p| p.model == *model).collect();
        pts.sort_by(|a, b| a.train_partitions.total_cmp(&b.train_partitions));
        let mut band: Vec<(f64, f64)> = pts.iter().map(|p| (p.train_partitions, p.iqr_pct.1.max(floor))).collect();
        band.extend(pts.iter().rev().map(|p| (p.train_partitions, p.iqr_pct.0.max(floor))));
        chart.draw_series(std::iter::once(Polygon::new(band, color.mix(0.2)))).map_err(plot_err)?;
        let line: Vec<(f64, f64)> = pts.iter().map(|p| (p.train_partitions, p.error_pct.max(floor))).collect();
        chart
            .draw_series(LineSeries::new(line.clone(), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(model.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        chart.draw_series(line.into_iter().map(|p| Circle::new(p, 4, color.filled()))).map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// 2-D projection colored by terrain, marker shape by source dataset.
pub fn plot_projection(path: &Path, coords: &[[f64; 2]], set: &EmbeddingSet, title: &str) -> Result<()> {
    if coords.len() != set.len() || coords.is_empty() {
        return Err(Error::Shape(format!("{} coordinates for {} embeddings", coords.len(), set.len())));
    }
    let bounds = |k: usize| {
        let (lo, hi) = coords.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), c| (a.min(c[k]), b.max(c[k])));
        let pad = 0.05 * (hi - lo).max(1e-9);
        (lo - pad)..(hi + pad)
    };
    let root = SVGBackend::new(path, (820, 680)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(30)
        .y_label_area_size(40)
        .build_cartesian_2d(bounds(0), bounds(1))
        .map_err(plot_err)?;
    chart.configure_mesh().disable_mesh().draw().map_err(plot_err)?;

    let labels = set.label_indices();
    let mut names: Vec<(usize, &str)> = labels.iter().zip(&set.terrains).map(|(&i, t)| (i, t.as_str())).collect();
    names.sort_unstable();
    names.dedup();
    for (class, name) in names {
        let color = Palette99::pick(class).to_rgba();
        let members: Vec<usize> = (0..coords.len()).filter(|&i| labels[i] == class).collect();
        let at = |i: usize| (coords[i][0], coords[i][1]);
        let by = |tag: DatasetTag| members.iter().copied().filter(move |&i| set.datasets[i] == tag);
        chart
            .draw_series(by(DatasetTag::Vulpi).map(|i| Circle::new(at(i), 4, color.filled())))
            .map_err(plot_err)?
            .label(name)
            .legend(move |(x, y)| Circle::new((x + 8, y), 4, color.filled()));
        chart
            .draw_series(by(DatasetTag::Borealtc).map(|i| TriangleMarker::new(at(i), 5, color.filled())))
            .map_err(plot_err)?;
        chart.draw_series(by(DatasetTag::Other).map(|i| Cross::new(at(i), 4, color.stroke_width(2)))).map_err(plot_err)?;
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::UpperRight)
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}
