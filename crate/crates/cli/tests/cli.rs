use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn terrain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_terrain"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("TERRAIN_OUTPUT_ROOT")
        .output()
        .expect("spawn terrain")
}

fn ok(args: &[&str]) -> String {
    let out = terrain(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth_vulpi(dir: &Path) -> String {
    let store = dir.join("vulpi");
    ok(&["synth", "--dataset", "vulpi", "--seed", "3", "--output", s(&store)]);
    s(&store).to_string()
}

#[test]
fn bad_mapping_fails_with_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let mapping = dir.path().join("bad.toml");
    fs::write(
        &mapping,
        "dataset = \"vulpi\"\n[imu]\nfile_prefix = \"imu_\"\ntime_column = \"t\"\ncolumns = [\"wx\"]\nrate = 50.0\n\
         [wheel]\nfile_prefix = \"\"\ntime_column = \"t\"\ncolumns = [\"a\", \"b\", \"c\", \"d\"]\nrate = -1.0\n",
    )
    .unwrap();
    let out = terrain(&["ingest", "--input", s(dir.path()), "--mapping", s(&mapping), "--output", s(&dir.path().join("o"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    for needle in ["imu: expected 6 value columns", "wheel: rate must be positive", "file_prefix"] {
        assert!(err.contains(needle), "missing `{needle}` in {err}");
    }
}

#[test]
fn ingest_reads_a_mapped_layout() {
    let dir = tempfile::tempdir().unwrap();
    let raw = synth_vulpi(dir.path());
    let mapping = dir.path().join("m.toml");
    fs::write(
        &mapping,
        "dataset = \"vulpi\"\n\
         [imu]\nfile_prefix = \"imu_\"\ntime_column = \"time\"\ncolumns = [\"wx\", \"wy\", \"wz\", \"ax\", \"ay\", \"az\"]\nrate = 50.0\n\
         [wheel]\nfile_prefix = \"wheel_\"\ntime_column = \"time\"\ncolumns = [\"current_left\", \"current_right\", \"velocity_left\", \"velocity_right\"]\nrate = 15.0\n",
    )
    .unwrap();
    let store = dir.path().join("store");
    let out = ok(&["ingest", "--input", &raw, "--mapping", s(&mapping), "--output", s(&store)]);
    assert!(out.contains("recordings: 12") && out.contains("total: 6.0 min"), "{out}");
    assert!(store.join("manifest.json").is_file());
}

#[test]
fn config_problems_are_listed_together() {
    let out = terrain(&["evaluate", "--dataset", "combined", "--set", "train.epochs=0", "--set", "pipeline.folds=1"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    for needle in ["4 problem(s)", "epochs", "folds", "data.vulpi", "data.borealtc"] {
        assert!(err.contains(needle), "missing `{needle}` in {err}");
    }
}

#[test]
fn evaluate_snapshot_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let store = synth_vulpi(dir.path());
    let out_a = dir.path().join("a");
    let table = ok(&["evaluate", "--vulpi", &store, "--model", "cnn", "--output", s(&out_a), "--set", "train.epochs=2"]);
    for terrain in ["concrete", "dirt_road", "ploughed", "unploughed", "accuracy"] {
        assert!(table.contains(terrain), "{table}");
    }
    let run = out_a.join("evaluate/vulpi-cnn");
    for f in ["config.toml", "metrics.csv", "metrics_raw.csv", "folds.csv", "results.json", "confusion_fold4.csv"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }

    // The snapshot alone reproduces the run bit for bit.
    let out_b = dir.path().join("b");
    ok(&["evaluate", "--config", s(&run.join("config.toml")), "--output", s(&out_b)]);
    let a = fs::read(run.join("results.json")).unwrap();
    let b = fs::read(out_b.join("evaluate/vulpi-cnn/results.json")).unwrap();
    assert_eq!(a, b);

    let first = ok(&["report", "--input", s(&out_a)]);
    assert!(first.contains("## Cross-validation: vulpi / cnn"));
    let second = ok(&["report", "--input", s(&out_a)]);
    assert_eq!(first, second);
    assert_eq!(fs::read_to_string(out_a.join("report.md")).unwrap(), first);
}

#[test]
fn embed_writes_projection_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let store = synth_vulpi(dir.path());
    let out = dir.path().join("o");
    let text = ok(&[
        "embed", "--vulpi", &store, "--output", s(&out), "--set", "train.epochs=2", "--set", "tsne.perplexity=10", "--set",
        "tsne.iterations=300",
    ]);
    assert!(text.contains("silhouette"), "{text}");
    let run = out.join("embed/vulpi-cnn");
    let csv = fs::read_to_string(run.join("tsne.csv")).unwrap();
    assert!(csv.starts_with("x,y,terrain,dataset,partition"));
    assert_eq!(csv.lines().count(), 1 + 72);
    assert!(fs::read_to_string(run.join("tsne.svg")).unwrap().starts_with("<svg"));
    fs::remove_file(run.join("tsne.svg")).unwrap();
    let report = ok(&["report", "--input", s(&out)]);
    assert!(report.contains("Embedding projection") && run.join("tsne.svg").is_file());
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let store = synth_vulpi(dir.path());
    let root = dir.path().join("env-root");
    let out = Command::new(env!("CARGO_BIN_EXE_terrain"))
        .args(["stats", "--vulpi", &store])
        .env("TERRAIN_OUTPUT_ROOT", &root)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join("stats/vulpi/stats.csv").is_file());
    assert!(root.join("stats/vulpi/config.toml").is_file());
}

#[test]
fn report_without_results_fails() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!terrain(&["report", "--input", s(dir.path())]).status.success());
}
