use std::path::Path;
use std::process::{Command, Output};

use viscous_shock::pipeline::ExperimentConfig;

fn shock(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shock"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> String {
    let path = dir.join("cfg.json");
    std::fs::write(&path, serde_json::to_string(cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn profile_preset_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = shock(&["profile", "--preset", "burgers", "--out", out]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["profile.csv", "profile.json", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    let hash = ExperimentConfig::preset("burgers").unwrap().hash();
    assert_eq!(manifest["config_hash"], hash.as_str());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = shock(&["profile", "--preset", "nope"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("unknown preset"));
    assert_eq!(code(&shock(&["profile"])), 2);
    assert_eq!(code(&shock(&["frobnicate"])), 2);
    assert_eq!(
        code(&shock(&[
            "profile",
            "--preset",
            "burgers",
            "--threads",
            "0"
        ])),
        2
    );

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"label\": \"x\", \"model\": ").unwrap();
    let o = shock(&["verify", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(
        stderr(&o).contains("invalid configuration"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn invalid_configs_are_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::preset("burgers").unwrap();
    cfg.perturbation[0].amplitude = 0.5;
    let path = write_config(dir.path(), &cfg);
    let o = shock(&["evolve", "--config", &path]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("smallness"), "{}", stderr(&o));

    let mut cfg = ExperimentConfig::preset("burgers").unwrap();
    cfg.time.dt = Some(10.0);
    let path = write_config(dir.path(), &cfg);
    let o = shock(&["evolve", "--config", &path]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("step limits"), "{}", stderr(&o));
}

#[test]
fn certify_filters_ids() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = shock(&["certify", "--ids", "3.15", "--out", out, "--threads", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let certs: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".json"))
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    assert!(certs.contains(&"cert_3_15.json".to_string()));
    assert_eq!(certs.len(), 2, "{certs:?}"); // certificate plus manifest

    let o = shock(&["certify", "--ids", "2.99", "--out", out]);
    assert_eq!(code(&o), 2);
    // Burgers has no outgoing mode: the certificates are undefined
    let o = shock(&["certify", "--preset", "burgers", "--out", out]);
    assert_eq!(code(&o), 2);
}

#[test]
fn plot_handles_empty_and_corrupt_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&shock(&["plot", "--out", out])), 2, "missing report");

    std::fs::write(dir.path().join("report.json"), "{}").unwrap();
    let o = shock(&["plot", "--out", out]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("warning"));

    std::fs::write(dir.path().join("report.json"), "{\"times\": [1, 2").unwrap();
    assert_eq!(code(&shock(&["plot", "--out", out])), 2);
}
