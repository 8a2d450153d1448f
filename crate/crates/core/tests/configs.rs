//! The configuration files shipped in `configs/` stay loadable.

use std::path::PathBuf;

use terrain_core::config::ExperimentConfig;
use terrain_core::eval::DatasetSelection;
use terrain_core::signal::{DatasetMapping, DatasetTag};

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn dataset_mappings_parse() {
    let v = DatasetMapping::load(&configs().join("vulpi.toml")).unwrap();
    assert_eq!(v.dataset, DatasetTag::Vulpi);
    assert_eq!(v.label_space().unwrap().len(), 4);
    let b = DatasetMapping::load(&configs().join("borealtc.toml")).unwrap();
    assert_eq!(b.dataset, DatasetTag::Borealtc);
    assert_eq!((b.imu.rate, b.wheel.rate), (100.0, 6.5));
    assert_eq!(b.label_space().unwrap().len(), 5);
}

#[test]
fn experiment_configs_parse() {
    let e = ExperimentConfig::load(Some(&configs().join("experiment.toml")), &[]).unwrap();
    assert_eq!(e.dataset, DatasetSelection::Combined);
    assert!(e.problems(false).iter().all(|p| p.contains("not an ingested store")));
    let s = ExperimentConfig::load(Some(&configs().join("synthetic.toml")), &[]).unwrap();
    assert!(s.problems(false).is_empty());
}
