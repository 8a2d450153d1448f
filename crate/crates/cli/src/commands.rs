use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use terrain_core::config::ExperimentConfig;
use terrain_core::embed::{embed_recordings, silhouette_score, tsne, write_projection_csv};
use terrain_core::eval::report::{write_ablation_report, write_cv_report, write_json};
use terrain_core::eval::{fit_full, run_ablation, run_cross_validation, CvReport, FittedModel};
use terrain_core::nn::{write_history, Checkpoint};
use terrain_core::plot::{plot_ablation, plot_projection};
use terrain_core::signal::{
    compute_command_stats, ingest_dataset, write_stats_csv, write_store, DatasetMapping, DatasetTag, GroupMapping,
    Manifest, COMMAND_COMPONENTS,
};
use terrain_core::synthetic::{synthetic_recordings, SyntheticSpec};

use crate::ExperimentArgs;

pub const OUTPUT_ROOT_ENV: &str = "TERRAIN_OUTPUT_ROOT";
pub const SNAPSHOT: &str = "config.toml";

/// Resolves flags over the config file over defaults.
pub fn resolve(args: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut overrides = args.overrides.clone();
    let quoted = |p: &Path| format!("{:?}", p.display().to_string());
    if let Some(d) = &args.dataset {
        overrides.push(format!("dataset={d:?}"));
    }
    if let Some(m) = &args.model {
        overrides.push(format!("model={m:?}"));
    }
    if let Some(s) = args.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(w) = args.workers {
        overrides.push(format!("workers={w}"));
    }
    if let Some(p) = &args.vulpi {
        overrides.push(format!("data.vulpi={}", quoted(p)));
    }
    if let Some(p) = &args.borealtc {
        overrides.push(format!("data.borealtc={}", quoted(p)));
    }
    let mut cfg = ExperimentConfig::load(args.config.as_deref(), &overrides)?;
    if let Some(o) = &args.output {
        cfg.output = Some(o.clone());
    } else if cfg.output.is_none() {
        cfg.output = Some(std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("results"), PathBuf::from));
    }
    Ok(cfg)
}

fn run_dir(cfg: &ExperimentConfig, command: &str, name: &str) -> Result<PathBuf> {
    let dir = cfg.output.clone().unwrap_or_else(|| "results".into()).join(command).join(name);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(SNAPSHOT), cfg.to_toml()?).context("writing config snapshot")?;
    Ok(dir)
}

fn prepare(args: &ExperimentArgs) -> Result<(ExperimentConfig, Vec<terrain_core::signal::Recording>)> {
    let cfg = resolve(args)?;
    cfg.validate(true)?;
    let recs = cfg.load_recordings()?;
    info!("{}: {} recordings", cfg.dataset, recs.len());
    Ok((cfg, recs))
}

fn print_manifest(m: &Manifest) {
    println!("recordings: {}", m.recordings.len());
    println!("total: {:.1} min", m.total_duration_s / 60.0);
    for (class, secs) in &m.class_durations_s {
        println!("  {class:<12} {:>7.1} min", secs / 60.0);
    }
}

pub fn ingest(input: &Path, mapping: &Path, output: &Path) -> Result<()> {
    let mapping = DatasetMapping::load(mapping)?;
    let recs = ingest_dataset(input, &mapping).with_context(|| format!("ingesting {}", input.display()))?;
    if recs.is_empty() {
        bail!("no recordings found under {} with this mapping", input.display());
    }
    let manifest = write_store(output, &mapping, &recs)?;
    print_manifest(&manifest);
    println!("store written to {}", output.display());
    Ok(())
}

pub fn synth(dataset: &str, seed: u64, per_class: usize, duration: f64, output: &Path) -> Result<()> {
    let tag: DatasetTag = dataset.parse()?;
    let mut spec = SyntheticSpec::stand_in(tag, seed)?;
    spec.recordings_per_class = per_class;
    spec.duration = duration;
    let problems = spec.problems();
    if !problems.is_empty() {
        bail!("{}", problems.join("; "));
    }
    let recs = synthetic_recordings(&spec)?;
    let classes: Vec<String> = spec.classes.iter().map(|c| c.terrain.clone()).collect();
    let mut mapping = DatasetMapping::canonical(tag, &classes, spec.imu_rate, spec.wheel_rate);
    mapping.commands = Some(GroupMapping {
        file_prefix: "cmd_".into(),
        time_column: "time".into(),
        time_scale: 1.0,
        columns: COMMAND_COMPONENTS.iter().map(|c| c.to_string()).collect(),
        rate: spec.wheel_rate,
    });
    let manifest = write_store(output, &mapping, &recs)?;
    print_manifest(&manifest);
    Ok(())
}

pub fn stats(args: &ExperimentArgs) -> Result<()> {
    let (cfg, recs) = prepare(args)?;
    let stats = compute_command_stats(&recs, cfg.pipeline.partition_duration, true)?;
    let dir = run_dir(&cfg, "stats", cfg.dataset.as_str())?;
    write_stats_csv(&dir.join("stats.csv"), &stats)?;
    println!("{:<12} {:>10} {:>10} {:>10} {:>10} {:>6}", "terrain", "|vx| med", "|vx| iqr", "|wz| med", "|wz| iqr", "parts");
    for s in &stats {
        println!(
            "{:<12} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>6}",
            s.terrain.as_str(),
            s.median_abs_vx,
            s.iqr_abs_vx,
            s.median_abs_wz,
            s.iqr_abs_wz,
            s.n_partitions
        );
    }
    println!("written to {}", dir.display());
    Ok(())
}

pub fn train(args: &ExperimentArgs) -> Result<()> {
    let (cfg, recs) = prepare(args)?;
    let space = cfg.dataset.label_space();
    let fitted = fit_full(&recs, &space, cfg.model, &cfg.cv())?;
    let dir = run_dir(&cfg, "train", &format!("{}-{}", cfg.dataset, cfg.model))?;
    fitted.to_checkpoint()?.save(&dir.join("checkpoint.json"))?;
    write_history(&dir.join("history.csv"), &fitted.history)?;
    println!("best epoch {} of {}", fitted.best_epoch, fitted.history.len());
    println!("checkpoint written to {}", dir.join("checkpoint.json").display());
    Ok(())
}

pub fn print_cv_table(r: &CvReport) {
    println!("{} / {}", r.dataset, r.model);
    println!("{:<12} {:>9} {:>9} {:>9}", "terrain", "prec %", "recall %", "F1 %");
    for c in &r.per_class {
        println!("{:<12} {:>9.2} {:>9.2} {:>9.2}", c.terrain, 100.0 * c.precision, 100.0 * c.recall, 100.0 * c.f1);
    }
    println!(
        "accuracy {:.2} % (fold IQR {:.2}-{:.2}), without test oversampling {:.2} %",
        100.0 * r.mean_accuracy,
        100.0 * r.accuracy_iqr.0,
        100.0 * r.accuracy_iqr.1,
        100.0 * r.raw_mean_accuracy
    );
}

pub fn evaluate(args: &ExperimentArgs) -> Result<()> {
    let (cfg, recs) = prepare(args)?;
    let space = cfg.dataset.label_space();
    let report = run_cross_validation(&recs, &space, cfg.dataset.as_str(), cfg.model, &cfg.cv())?;
    let dir = run_dir(&cfg, "evaluate", &format!("{}-{}", cfg.dataset, cfg.model))?;
    write_cv_report(&dir, &report)?;
    print_cv_table(&report);
    println!("written to {}", dir.display());
    Ok(())
}

pub fn ablate(args: &ExperimentArgs) -> Result<()> {
    let (cfg, recs) = prepare(args)?;
    let space = cfg.dataset.label_space();
    let outcome = run_ablation(&recs, &space, cfg.dataset.as_str(), &cfg.ablation.models, &cfg.ablation.ratios, &cfg.cv())?;
    let dir = run_dir(&cfg, "ablate", cfg.dataset.as_str())?;
    write_ablation_report(&dir, &outcome)?;
    plot_ablation(&dir.join("ablation.svg"), &outcome)?;
    crate::report::print_ablation(&outcome);
    println!("written to {}", dir.display());
    Ok(())
}

#[derive(serde::Serialize, serde::Deserialize)]
pub struct EmbedSummary {
    pub dataset: String,
    pub model: String,
    pub partitions: usize,
    pub embedding_dim: usize,
    pub silhouette_embedding: f64,
    pub silhouette_projection: f64,
    pub final_kl: f64,
}

pub fn embed(args: &ExperimentArgs, checkpoint: Option<&Path>) -> Result<()> {
    let (cfg, recs) = prepare(args)?;
    let space = cfg.dataset.label_space();
    let fitted = match checkpoint {
        Some(p) => {
            let m = FittedModel::from_checkpoint(&Checkpoint::load(p)?)?;
            let names: Vec<String> = space.names().iter().map(|n| n.to_string()).collect();
            if m.classes != names {
                bail!("checkpoint classes {:?} do not match dataset {} ({names:?})", m.classes, cfg.dataset);
            }
            m
        }
        None => fit_full(&recs, &space, cfg.model, &cfg.cv())?,
    };
    let cv = cfg.cv();
    let set = terrain_core::eval::with_workers(cfg.workers, || {
        embed_recordings(&fitted, &recs, &space, &cv.pipeline, cv.train.batch_size)
    })??;
    let proj = tsne(&set, &cfg.tsne_config())?;
    let labels = set.label_indices();
    let summary = EmbedSummary {
        dataset: cfg.dataset.to_string(),
        model: fitted.model.kind().to_string(),
        partitions: set.len(),
        embedding_dim: set.dim,
        silhouette_embedding: silhouette_score(&set.values, set.dim, &labels)?,
        silhouette_projection: silhouette_score(&proj.flat(), 2, &labels)?,
        final_kl: proj.final_kl(),
    };
    let dir = run_dir(&cfg, "embed", &format!("{}-{}", cfg.dataset, summary.model))?;
    write_projection_csv(&dir.join("tsne.csv"), &proj.coords, &set)?;
    write_json(&dir.join("embed_summary.json"), &summary)?;
    plot_projection(&dir.join("tsne.svg"), &proj.coords, &set, &format!("t-SNE of {} embeddings ({})", summary.model, summary.dataset))?;
    println!(
        "{} partitions, silhouette {:.3} (projection {:.3}), KL {:.3}",
        summary.partitions, summary.silhouette_embedding, summary.silhouette_projection, summary.final_kl
    );
    println!("written to {}", dir.display());
    Ok(())
}
