//! Delimiter-separated ingestion and the canonical on-disk store.
//!
//! Layout (both for published datasets and the canonical store):
//!
//! ```text
//! <root>/<terrain_dir>/<imu.file_prefix><key>.csv
//! <root>/<terrain_dir>/<wheel.file_prefix><key>.csv
//! <root>/<terrain_dir>/<commands.file_prefix><key>.csv   (optional)
//! ```
//!
//! Column names, time scaling and nominal rates come from a
//! [`DatasetMapping`] TOML file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    Channel, DatasetTag, LabelSpace, Recording, TerrainLabel, COMMAND_COMPONENTS,
    IMU_COMPONENTS, RATE_TOLERANCE, WHEEL_COMPONENTS,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMapping {
    pub file_prefix: String,
    pub time_column: String,
    /// Multiplier that converts the time column to seconds.
    #[serde(default = "unit_scale")]
    pub time_scale: f64,
    pub columns: Vec<String>,
    /// Nominal rate in Hz.
    pub rate: f64,
}

fn unit_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMapping {
    pub dataset: DatasetTag,
    /// Declared class set; defaults to the published set for known datasets.
    #[serde(default)]
    pub classes: Vec<String>,
    /// Directory name -> terrain label. Unlisted directories map to themselves.
    #[serde(default)]
    pub terrain_dirs: BTreeMap<String, String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    pub imu: GroupMapping,
    pub wheel: GroupMapping,
    #[serde(default)]
    pub commands: Option<GroupMapping>,
}

fn default_delimiter() -> char {
    ','
}

impl DatasetMapping {
    pub fn from_toml(text: &str) -> Result<Self> {
        let m: DatasetMapping =
            toml::from_str(text).map_err(|e| Error::Config(format!("mapping: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Mapping for the canonical store written by [`write_store`].
    pub fn canonical(dataset: DatasetTag, classes: &[String], imu_rate: f64, wheel_rate: f64) -> Self {
        let group = |prefix: &str, cols: &[&str], rate: f64| GroupMapping {
            file_prefix: prefix.to_string(),
            time_column: "time".into(),
            time_scale: 1.0,
            columns: cols.iter().map(|c| c.to_string()).collect(),
            rate,
        };
        DatasetMapping {
            dataset,
            classes: classes.to_vec(),
            terrain_dirs: BTreeMap::new(),
            delimiter: ',',
            imu: group("imu_", &IMU_COMPONENTS, imu_rate),
            wheel: group("wheel_", &WHEEL_COMPONENTS, wheel_rate),
            commands: None,
        }
    }

    pub fn label_space(&self) -> Result<LabelSpace> {
        if self.classes.is_empty() {
            match self.dataset.default_classes() {
                Some(c) => LabelSpace::new(c),
                None => Err(Error::Config("mapping for dataset `other` must list `classes`".into())),
            }
        } else {
            LabelSpace::new(&self.classes)
        }
    }

    /// Collects every problem instead of stopping at the first one.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |name: &str, g: &GroupMapping, want: usize| {
            if g.columns.len() != want {
                out.push(format!("{name}: expected {want} value columns, found {}", g.columns.len()));
            }
            if !(g.rate.is_finite() && g.rate > 0.0) {
                out.push(format!("{name}: rate must be positive"));
            }
            if !(g.time_scale.is_finite() && g.time_scale > 0.0) {
                out.push(format!("{name}: time_scale must be positive"));
            }
            if g.file_prefix.is_empty() {
                out.push(format!("{name}: file_prefix must not be empty"));
            }
        };
        check("imu", &self.imu, IMU_COMPONENTS.len());
        check("wheel", &self.wheel, WHEEL_COMPONENTS.len());
        if let Some(c) = &self.commands {
            check("commands", c, COMMAND_COMPONENTS.len());
        }
        if let Err(e) = self.label_space() {
            out.push(e.to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    fn terrain_for_dir(&self, dir: &str) -> TerrainLabel {
        TerrainLabel::new(self.terrain_dirs.get(dir).map_or(dir, String::as_str))
    }
}

/// Reads one channel group file.
pub fn read_channel(
    path: &Path,
    group: &GroupMapping,
    name: &str,
    delimiter: char,
) -> Result<Channel> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path.display().to_string(), io),
            other => Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("{other:?}"),
            },
        })?;
    let headers = reader.headers()?.clone();
    let find = |col: &str| {
        headers
            .iter()
            .position(|h| h == col)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: col.to_string(),
            })
    };
    let time_idx = find(&group.time_column)?;
    let idx: Vec<usize> = group.columns.iter().map(|c| find(c)).collect::<Result<_>>()?;

    let mut ts = Vec::new();
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let parse = |i: usize| -> Result<f64> {
            let raw = record.get(i).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("`{raw}` is not a number (column {})", headers.get(i).unwrap_or("?")),
            })
        };
        ts.push(parse(time_idx)? * group.time_scale);
        for &i in &idx {
            values.push(parse(i)?);
        }
    }
    let context = format!("{} ({name})", path.display());
    let ch = Channel::new(context.clone(), group.rate, ts, values, idx.len())?;
    if let Some(measured) = ch.measured_rate() {
        if ((measured - group.rate) / group.rate).abs() > RATE_TOLERANCE {
            return Err(Error::RateMismatch {
                context,
                declared: group.rate,
                measured,
            });
        }
    }
    Ok(Channel { name: name.to_string(), ..ch })
}

/// Files that make up one recording.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordingSource {
    pub id: String,
    pub terrain: TerrainLabel,
    pub imu: PathBuf,
    pub wheel: PathBuf,
    pub commands: Option<PathBuf>,
}

pub fn ingest_recording(source: &RecordingSource, mapping: &DatasetMapping) -> Result<Recording> {
    let classes = mapping.label_space()?;
    if !classes.contains(&source.terrain) {
        return Err(Error::UnknownTerrain {
            label: source.terrain.to_string(),
            dataset: mapping.dataset.to_string(),
        });
    }
    let d = mapping.delimiter;
    let imu = read_channel(&source.imu, &mapping.imu, "imu", d)?;
    let wheel = read_channel(&source.wheel, &mapping.wheel, "wheel", d)?;
    let commands = match (&source.commands, &mapping.commands) {
        (Some(p), Some(g)) => Some(read_channel(p, g, "commands", d)?),
        _ => None,
    };
    Recording::new(
        source.id.clone(),
        source.terrain.clone(),
        mapping.dataset,
        imu,
        wheel,
        commands,
    )
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir.display().to_string(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    Ok(entries)
}

/// Finds every recording under `root` following the mapping's layout.
pub fn discover(root: &Path, mapping: &DatasetMapping) -> Result<Vec<RecordingSource>> {
    let mut out = Vec::new();
    for dir in sorted_entries(root)? {
        if !dir.is_dir() {
            continue;
        }
        let dir_name = dir.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let terrain = mapping.terrain_for_dir(&dir_name);
        for file in sorted_entries(&dir)? {
            let Some(fname) = file.file_name().and_then(|s| s.to_str()) else {
                continue;
            };
            let Some(key) = fname
                .strip_prefix(mapping.imu.file_prefix.as_str())
                .and_then(|rest| rest.strip_suffix(".csv"))
            else {
                continue;
            };
            let wheel = dir.join(format!("{}{key}.csv", mapping.wheel.file_prefix));
            if !wheel.exists() {
                return Err(Error::Insufficient(format!(
                    "{}: no matching wheel file {}",
                    file.display(),
                    wheel.display()
                )));
            }
            let commands = mapping
                .commands
                .as_ref()
                .map(|c| dir.join(format!("{}{key}.csv", c.file_prefix)))
                .filter(|p| p.exists());
            out.push(RecordingSource {
                id: format!("{}/{}/{key}", mapping.dataset, terrain),
                terrain: terrain.clone(),
                imu: file,
                wheel,
                commands,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::Empty(format!("no recordings found under {}", root.display())));
    }
    Ok(out)
}

pub fn ingest_dataset(root: &Path, mapping: &DatasetMapping) -> Result<Vec<Recording>> {
    mapping.validate()?;
    discover(root, mapping)?
        .iter()
        .map(|s| ingest_recording(s, mapping))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub terrain: TerrainLabel,
    pub dataset: DatasetTag,
    pub duration_s: f64,
    pub imu_rows: usize,
    pub wheel_rows: usize,
    pub has_commands: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub mapping: DatasetMapping,
    pub classes: Vec<TerrainLabel>,
    pub total_duration_s: f64,
    /// Duration per class in seconds.
    pub class_durations_s: BTreeMap<String, f64>,
    pub recordings: Vec<ManifestEntry>,
}

fn write_channel(path: &Path, ch: &Channel, columns: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["time"];
    header.extend_from_slice(columns);
    w.write_record(&header)?;
    for t in 0..ch.len() {
        let mut row = vec![format!("{:?}", ch.timestamps()[t])];
        row.extend(ch.row(t).iter().map(|v| format!("{v:?}")));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

fn recording_key(id: &str) -> String {
    id.rsplit('/').next().unwrap_or(id).replace(|c: char| !c.is_ascii_alphanumeric() && c != '-' && c != '_', "_")
}

/// Writes one recording in canonical layout; values use shortest round-trip
/// formatting so re-ingestion is lossless.
pub fn write_recording(root: &Path, rec: &Recording) -> Result<()> {
    let dir = root.join(rec.terrain.as_str());
    fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let key = recording_key(&rec.id);
    write_channel(&dir.join(format!("imu_{key}.csv")), &rec.imu, &IMU_COMPONENTS)?;
    write_channel(&dir.join(format!("wheel_{key}.csv")), &rec.wheel, &WHEEL_COMPONENTS)?;
    if let Some(c) = &rec.commands {
        write_channel(&dir.join(format!("cmd_{key}.csv")), c, &COMMAND_COMPONENTS)?;
    }
    Ok(())
}

/// Writes a canonical store plus `manifest.json` and returns the manifest.
pub fn write_store(root: &Path, source_mapping: &DatasetMapping, recs: &[Recording]) -> Result<Manifest> {
    fs::create_dir_all(root).map_err(|e| Error::io(root.display().to_string(), e))?;
    let classes = source_mapping.label_space()?;
    let mut mapping = DatasetMapping::canonical(
        source_mapping.dataset,
        &classes.names().iter().map(|c| c.to_string()).collect::<Vec<_>>(),
        source_mapping.imu.rate,
        source_mapping.wheel.rate,
    );
    if let Some(c) = &source_mapping.commands {
        mapping.commands = Some(GroupMapping {
            file_prefix: "cmd_".into(),
            time_column: "time".into(),
            time_scale: 1.0,
            columns: COMMAND_COMPONENTS.iter().map(|s| s.to_string()).collect(),
            rate: c.rate,
        });
    }
    let mut entries = Vec::with_capacity(recs.len());
    let mut class_durations: BTreeMap<String, f64> = BTreeMap::new();
    for rec in recs {
        write_recording(root, rec)?;
        let duration = rec.duration();
        *class_durations.entry(rec.terrain.to_string()).or_default() += duration;
        entries.push(ManifestEntry {
            id: rec.id.clone(),
            terrain: rec.terrain.clone(),
            dataset: rec.dataset,
            duration_s: duration,
            imu_rows: rec.imu.len(),
            wheel_rows: rec.wheel.len(),
            has_commands: rec.commands.is_some(),
        });
    }
    let manifest = Manifest {
        mapping,
        classes: classes.names().to_vec(),
        total_duration_s: entries.iter().map(|e| e.duration_s).sum(),
        class_durations_s: class_durations,
        recordings: entries,
    };
    let path = root.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(manifest)
}

/// Loads a canonical store written by [`write_store`].
pub fn load_store(root: &Path) -> Result<(Manifest, Vec<Recording>)> {
    let path = root.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let mut recs = Vec::with_capacity(manifest.recordings.len());
    for entry in &manifest.recordings {
        let dir = root.join(entry.terrain.as_str());
        let key = recording_key(&entry.id);
        let cmd = dir.join(format!("cmd_{key}.csv"));
        let source = RecordingSource {
            id: entry.id.clone(),
            terrain: entry.terrain.clone(),
            imu: dir.join(format!("imu_{key}.csv")),
            wheel: dir.join(format!("wheel_{key}.csv")),
            commands: cmd.exists().then_some(cmd),
        };
        recs.push(ingest_recording(&source, &manifest.mapping)?);
    }
    Ok((manifest, recs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn group(cols: &[&str], rate: f64) -> GroupMapping {
        GroupMapping {
            file_prefix: "imu_".into(),
            time_column: "t".into(),
            time_scale: 1.0,
            columns: cols.iter().map(|s| s.to_string()).collect(),
            rate,
        }
    }

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn reads_large_imu_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("t,a\n");
        for i in 0..50_000 {
            body.push_str(&format!("{},{}\n", i as f64 / 100.0, i % 7));
        }
        let p = write(dir.path(), "imu.csv", &body);
        let ch = read_channel(&p, &group(&["a"], 100.0), "imu", ',').unwrap();
        assert_eq!(ch.len(), 50_000);
        assert!((ch.measured_rate().unwrap() - 100.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_monotone_time() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "x.csv", "t,a\n0.0,1\n0.2,1\n0.1,1\n");
        let err = read_channel(&p, &group(&["a"], 5.0), "x", ',').unwrap_err();
        assert!(matches!(err, Error::NonMonotoneTimestamps { .. }), "{err}");
    }

    #[test]
    fn rejects_missing_column_and_rate_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "x.csv", "t,a\n0.0,1\n0.1,1\n0.2,1\n");
        let err = read_channel(&p, &group(&["b"], 10.0), "x", ',').unwrap_err();
        assert!(matches!(err, Error::MissingColumn { ref column, .. } if column == "b"));
        let err = read_channel(&p, &group(&["a"], 11.0), "x", ',').unwrap_err();
        assert!(matches!(err, Error::RateMismatch { .. }));
        assert!(read_channel(&p, &group(&["a"], 10.4), "x", ',').is_ok());
    }

    #[test]
    fn unknown_terrain_is_rejected() {
        let m = DatasetMapping::canonical(DatasetTag::Vulpi, &[], 50.0, 15.0);
        let src = RecordingSource {
            id: "x".into(),
            terrain: TerrainLabel::new("snow"),
            imu: "/nonexistent".into(),
            wheel: "/nonexistent".into(),
            commands: None,
        };
        assert!(matches!(ingest_recording(&src, &m), Err(Error::UnknownTerrain { .. })));
    }

    #[test]
    fn mapping_problems_are_enumerated() {
        let mut m = DatasetMapping::canonical(DatasetTag::Other, &[], 0.0, 6.5);
        m.wheel.columns.pop();
        let problems = m.problems();
        assert_eq!(problems.len(), 3, "{problems:?}");
    }
}
