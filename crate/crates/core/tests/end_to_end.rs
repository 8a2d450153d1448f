//! Store round trip and cross-validation determinism on small synthetic data.

use terrain_core::eval::{run_cross_validation, CvConfig};
use terrain_core::models::ModelKind;
use terrain_core::nn::TrainConfig;
use terrain_core::signal::{load_store, write_store, DatasetMapping, DatasetTag, LabelSpace};
use terrain_core::synthetic::{synthetic_recordings, SyntheticSpec};

#[test]
fn store_round_trip_preserves_recordings() {
    let spec = SyntheticSpec::stand_in(DatasetTag::Vulpi, 11).unwrap();
    let recs = synthetic_recordings(&spec).unwrap();
    let classes: Vec<String> = spec.classes.iter().map(|c| c.terrain.clone()).collect();
    let mapping = DatasetMapping::canonical(DatasetTag::Vulpi, &classes, spec.imu_rate, spec.wheel_rate);
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_store(dir.path(), &mapping, &recs).unwrap();
    let (loaded_manifest, back) = load_store(dir.path()).unwrap();

    assert_eq!(manifest, loaded_manifest);
    assert_eq!(back.len(), recs.len());
    for (a, b) in recs.iter().zip(&back) {
        assert_eq!((&a.id, &a.terrain, a.dataset), (&b.id, &b.terrain, b.dataset));
        assert_eq!(a.imu.len(), b.imu.len());
        for (x, y) in a.imu.values().iter().zip(b.imu.values()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}

#[test]
fn cross_validation_is_deterministic_per_seed() {
    let mut spec = SyntheticSpec::two_class(5);
    spec.recordings_per_class = 2;
    spec.duration = 15.0;
    let recs = synthetic_recordings(&spec).unwrap();
    let space = LabelSpace::from_recordings(&recs).unwrap();
    let cfg = CvConfig {
        seed: 9,
        train: TrainConfig { epochs: 2, ..TrainConfig::default() },
        ..CvConfig::default()
    };
    let a = run_cross_validation(&recs, &space, "tiny", ModelKind::Cnn, &cfg).unwrap();
    let b = run_cross_validation(&recs, &space, "tiny", ModelKind::Cnn, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.folds.len(), 5);
    assert_eq!(a.partitions, 12);
    let tested: usize = a.folds.iter().map(|f| f.test_partitions).sum();
    assert_eq!(tested, a.partitions);
}
