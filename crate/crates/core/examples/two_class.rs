//! Five-fold cross-validation of both models on two synthetic terrains.
//!
//! `cargo run --release --example two_class`

use terrain_core::config::ExperimentConfig;
use terrain_core::eval::run_cross_validation;
use terrain_core::models::ModelKind;
use terrain_core::signal::LabelSpace;
use terrain_core::synthetic::{synthetic_recordings, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::from_toml(include_str!("../../../configs/synthetic.toml"))?;
    let recs = synthetic_recordings(&SyntheticSpec::two_class(cfg.seed))?;
    let space = LabelSpace::from_recordings(&recs)?;
    for kind in [ModelKind::Cnn, ModelKind::Mamba] {
        let t = std::time::Instant::now();
        let report = run_cross_validation(&recs, &space, "two-class", kind, &cfg.cv())?;
        println!("{kind:>5}: accuracy {:.2} % in {:.1?}", 100.0 * report.mean_accuracy, t.elapsed());
        for f in &report.folds {
            println!("       fold {} accuracy {:.2} % (best epoch {})", f.fold, 100.0 * f.metrics.accuracy, f.best_epoch);
        }
        for c in &report.per_class {
            println!("       {:<9} F1 {:.2} %", c.terrain, 100.0 * c.f1);
        }
    }
    Ok(())
}
