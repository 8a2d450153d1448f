//! Experiment configuration: one TOML file plus dotted-key overrides.
//!
//! ```toml
//! dataset = "vulpi"
//! model = "cnn"
//! seed = 7
//!
//! [data]
//! vulpi = "stores/vulpi"
//!
//! [train]
//! epochs = 20
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::StftConfig;
use crate::embed::TsneConfig;
use crate::error::{Error, Result};
use crate::eval::{CvConfig, DatasetSelection, ABLATION_RATIOS};
use crate::models::{CnnConfig, MambaConfig, ModelKind};
use crate::nn::TrainConfig;
use crate::pipeline::PipelineConfig;
use crate::seed;
use crate::signal::{load_store, DatasetTag, Recording};

/// Canonical stores (as written by `ingest`) per dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub vulpi: Option<PathBuf>,
    pub borealtc: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub ratios: Vec<f64>,
    pub models: Vec<ModelKind>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig { ratios: ABLATION_RATIOS.to_vec(), models: vec![ModelKind::Cnn, ModelKind::Mamba] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSelection,
    pub model: ModelKind,
    /// Root of every derived seed.
    pub seed: u64,
    /// Results directory; unset falls back to the caller's default.
    pub output: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub data: DataPaths,
    pub pipeline: PipelineConfig,
    pub stft: StftConfig,
    pub cnn: CnnConfig,
    pub mamba: MambaConfig,
    pub train: TrainConfig,
    pub ablation: AblationConfig,
    pub tsne: TsneConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSelection::Vulpi,
            model: ModelKind::Cnn,
            seed: 0,
            output: None,
            workers: 0,
            data: DataPaths::default(),
            pipeline: PipelineConfig::default(),
            stft: StftConfig::default(),
            cnn: CnnConfig::default(),
            mamba: MambaConfig::default(),
            train: TrainConfig::default(),
            ablation: AblationConfig::default(),
            tsne: TsneConfig::default(),
        }
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Sets `a.b.c = value` inside a TOML table, creating tables on the way.
/// The value is read as a TOML literal, falling back to a bare string.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override `{assignment}` has an empty key segment")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{assignment}`: `{p}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_scalar(raw.trim()));
    Ok(())
}

impl ExperimentConfig {
    /// Parses TOML text with overrides applied on top.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &[])
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p.display().to_string(), e))?,
            None => String::new(),
        };
        Self::from_toml_with(&text, overrides).map_err(|e| match path {
            Some(p) => Error::Config(format!("{}: {e}", p.display())),
            None => e,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn store_for(&self, tag: DatasetTag) -> Option<&Path> {
        match tag {
            DatasetTag::Vulpi => self.data.vulpi.as_deref(),
            DatasetTag::Borealtc => self.data.borealtc.as_deref(),
            DatasetTag::Other => None,
        }
    }

    fn needed_tags(&self) -> Vec<DatasetTag> {
        [DatasetTag::Vulpi, DatasetTag::Borealtc].into_iter().filter(|t| self.dataset.includes(*t)).collect()
    }

    /// Every problem in the configuration. With `need_data`, the stores the
    /// selected dataset needs must be set and exist.
    pub fn problems(&self, need_data: bool) -> Vec<String> {
        let mut out = self.cv().problems();
        out.extend(self.tsne.problems());
        if self.ablation.ratios.is_empty() {
            out.push("ablation.ratios must not be empty".into());
        }
        for r in &self.ablation.ratios {
            if !(*r > 0.0 && *r <= 1.0) {
                out.push(format!("ablation.ratios: {r} is outside (0, 1]"));
            }
        }
        if self.ablation.models.is_empty() {
            out.push("ablation.models must not be empty".into());
        }
        for (tag, path) in [(DatasetTag::Vulpi, &self.data.vulpi), (DatasetTag::Borealtc, &self.data.borealtc)] {
            match path {
                Some(p) if !p.join("manifest.json").is_file() => {
                    out.push(format!("data.{tag}: {} is not an ingested store (no manifest.json)", p.display()));
                }
                None if need_data && self.needed_tags().contains(&tag) => {
                    out.push(format!("data.{tag} must be set for dataset {}", self.dataset));
                }
                _ => {}
            }
        }
        out
    }

    pub fn validate(&self, need_data: bool) -> Result<()> {
        let p = self.problems(need_data);
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("{} problem(s):\n  - {}", p.len(), p.join("\n  - "))))
        }
    }

    pub fn cv(&self) -> CvConfig {
        CvConfig {
            seed: self.seed,
            pipeline: self.pipeline.clone(),
            stft: self.stft.clone(),
            cnn: self.cnn.clone(),
            mamba: self.mamba.clone(),
            train: self.train.clone(),
            workers: self.workers,
            decimation: 1.0,
        }
    }

    /// t-SNE settings with the seed derived from the root seed.
    pub fn tsne_config(&self) -> TsneConfig {
        TsneConfig { seed: seed::derive(self.seed, &["tsne"]), ..self.tsne.clone() }
    }

    /// Loads the stores for the selected dataset, in Vulpi, BorealTC order.
    pub fn load_recordings(&self) -> Result<Vec<Recording>> {
        let mut out = Vec::new();
        for tag in self.needed_tags() {
            let path = self
                .store_for(tag)
                .ok_or_else(|| Error::Config(format!("data.{tag} must be set for dataset {}", self.dataset)))?;
            let (_, recs) = load_store(path)?;
            out.extend(recs.into_iter().filter(|r| self.dataset.includes(r.dataset)));
        }
        if out.is_empty() {
            return Err(Error::Empty(format!("no recordings for dataset {}", self.dataset)));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn overrides_take_precedence() {
        let text = "seed = 3\n[train]\nepochs = 4\n";
        let over = vec!["train.epochs=9".to_string(), "model=mamba".into(), "mamba.d_model = 8".into()];
        let cfg = ExperimentConfig::from_toml_with(text, &over).unwrap();
        assert_eq!((cfg.seed, cfg.train.epochs, cfg.model, cfg.mamba.d_model), (3, 9, ModelKind::Mamba, 8));
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset = DatasetSelection::Combined;
        cfg.train.learning_rate = 0.003;
        cfg.data.vulpi = Some("a/b".into());
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[train]\nepoch = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("[tsne]\nseed = 3\n").is_err());
    }

    #[test]
    fn all_problems_are_listed() {
        let over = vec![
            "train.epochs=0".to_string(),
            "pipeline.folds=1".into(),
            "tsne.perplexity=0.5".into(),
            "ablation.ratios=[2.0]".into(),
            "dataset=combined".into(),
        ];
        let cfg = ExperimentConfig::from_toml_with("", &over).unwrap();
        let p = cfg.problems(true);
        for needle in ["epochs", "folds", "perplexity", "ratios", "data.vulpi", "data.borealtc"] {
            assert!(p.iter().any(|m| m.contains(needle)), "{needle} missing from {p:?}");
        }
        assert!(cfg.problems(false).iter().all(|m| !m.contains("data.")));
    }

    #[test]
    fn missing_store_is_reported() {
        let cfg = ExperimentConfig::from_toml_with("", &["data.vulpi=\"/nonexistent/store\"".to_string()]).unwrap();
        assert!(cfg.problems(false).iter().any(|m| m.contains("not an ingested store")));
    }

    #[test]
    fn malformed_override() {
        let mut t = toml::Table::new();
        assert!(apply_override(&mut t, "novalue").is_err());
        assert!(apply_override(&mut t, "a..b=1").is_err());
    }
}
