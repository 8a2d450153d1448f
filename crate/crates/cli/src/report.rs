//! Markdown report and figures rebuilt from stored result files only.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use terrain_core::embed::EmbeddingSet;
use terrain_core::eval::report::read_json;
use terrain_core::eval::{AblationOutcome, CvReport};
use terrain_core::plot::{plot_ablation, plot_projection};
use terrain_core::signal::DatasetTag;

use crate::commands::EmbedSummary;

fn files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn name_of(p: &Path) -> &str {
    p.file_name().and_then(|n| n.to_str()).unwrap_or("")
}

pub fn cv_markdown(r: &CvReport) -> String {
    let mut s = format!("## Cross-validation: {} / {}\n\n", r.dataset, r.model);
    s += "| terrain | precision % | recall % | F1 % |\n|---|---:|---:|---:|\n";
    for c in &r.per_class {
        let _ = writeln!(s, "| {} | {:.2} | {:.2} | {:.2} |", c.terrain, 100.0 * c.precision, 100.0 * c.recall, 100.0 * c.f1);
    }
    let _ = writeln!(
        s,
        "\nAccuracy {:.2} % over {} folds (IQR {:.2} to {:.2}). Without test oversampling: {:.2} %.",
        100.0 * r.mean_accuracy,
        r.folds.len(),
        100.0 * r.accuracy_iqr.0,
        100.0 * r.accuracy_iqr.1,
        100.0 * r.raw_mean_accuracy
    );
    if !r.skipped_recordings.is_empty() {
        let _ = writeln!(s, "Skipped (shorter than one partition): {}.", r.skipped_recordings.join(", "));
    }
    s
}

pub fn ablation_markdown(o: &AblationOutcome) -> String {
    let mut s = format!("## Training-set ablation: {}\n\n", o.dataset);
    s += "| model | ratio | train partitions | error % | IQR % |\n|---|---:|---:|---:|---|\n";
    for p in &o.points {
        let _ = writeln!(
            s,
            "| {} | {} | {:.1} | {:.2} | {:.2} to {:.2} |",
            p.model, p.ratio, p.train_partitions, p.error_pct, p.iqr_pct.0, p.iqr_pct.1
        );
    }
    s += "\n";
    for t in &o.trends {
        match &t.fit {
            Some(f) => {
                let _ = writeln!(
                    s,
                    "- {}: log-log slope {:.3}, residual norm {:.3}, {} inversions ({} outside the IQR).",
                    t.model, f.slope, f.residual_norm, t.inversions, t.significant_inversions
                );
            }
            None => {
                let _ = writeln!(s, "- {}: no fit ({}).", t.model, t.fit_error.as_deref().unwrap_or("unknown"));
            }
        }
    }
    s
}

pub fn print_ablation(o: &AblationOutcome) {
    print!("{}", ablation_markdown(o));
}

fn embed_markdown(summary: &EmbedSummary) -> String {
    format!(
        "## Embedding projection: {} / {}\n\n{} partitions, {}-d embeddings. Silhouette over terrain labels: {:.3} in embedding space, {:.3} in the projection. Final KL {:.3}.\n",
        summary.dataset,
        summary.model,
        summary.partitions,
        summary.embedding_dim,
        summary.silhouette_embedding,
        summary.silhouette_projection,
        summary.final_kl
    )
}

fn read_projection(path: &Path) -> Result<(Vec<[f64; 2]>, EmbeddingSet)> {
    let mut r = csv::Reader::from_path(path)?;
    let (mut coords, mut ids, mut terrains, mut tags) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for row in r.records() {
        let row = row?;
        if row.len() < 5 {
            bail!("{}: expected x,y,terrain,dataset,partition", path.display());
        }
        coords.push([row[0].parse()?, row[1].parse()?]);
        terrains.push(row[2].to_string());
        tags.push(row[3].parse::<DatasetTag>()?);
        ids.push(row[4].to_string());
    }
    let values = coords.iter().flat_map(|c| c.iter().copied()).collect();
    Ok((coords, EmbeddingSet::new(2, values, ids, terrains, tags)?))
}

fn csv_markdown(path: &Path, title: &str) -> Result<String> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut s = format!("## {title}\n\n| {} |\n|{}|\n", header.join(" | "), "---|".repeat(header.len()));
    for row in r.records() {
        let row = row?;
        let _ = writeln!(s, "| {} |", row.iter().collect::<Vec<_>>().join(" | "));
    }
    Ok(s)
}

/// Scans `input` for result files, re-renders plots beside them and writes
/// `report.md` at the top.
pub fn run(input: &Path) -> Result<()> {
    let mut all = Vec::new();
    files(input, &mut all)?;
    let mut sections = Vec::new();
    for path in &all {
        let dir = path.parent().unwrap_or(input);
        match name_of(path) {
            "results.json" => sections.push(cv_markdown(&read_json(path)?)),
            "ablation.json" => {
                let o: AblationOutcome = read_json(path)?;
                plot_ablation(&dir.join("ablation.svg"), &o)?;
                sections.push(ablation_markdown(&o));
            }
            "embed_summary.json" => {
                let summary: EmbedSummary = read_json(path)?;
                let (coords, set) = read_projection(&dir.join("tsne.csv"))?;
                let title = format!("t-SNE of {} embeddings ({})", summary.model, summary.dataset);
                plot_projection(&dir.join("tsne.svg"), &coords, &set, &title)?;
                sections.push(embed_markdown(&summary));
            }
            "stats.csv" => sections.push(csv_markdown(path, &format!("Command statistics ({})", dir.display()))?),
            _ => {}
        }
    }
    if sections.is_empty() {
        bail!("no result files under {}", input.display());
    }
    let text = format!("# Results\n\n{}", sections.join("\n"));
    let out = input.join("report.md");
    fs::write(&out, &text).with_context(|| format!("writing {}", out.display()))?;
    print!("{text}");
    Ok(())
}
