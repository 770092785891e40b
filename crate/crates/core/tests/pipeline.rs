use viscous_shock::pipeline::{
    emit_plots, green_check, run_pipeline, write_run, ExperimentConfig, Shape, PRESETS,
};
use viscous_shock::ErrorClass;

fn small_burgers() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset("burgers").unwrap();
    cfg.label = "small".into();
    cfg.mesh.x_min = -300.0;
    cfg.mesh.x_max = 300.0;
    cfg.mesh.spacing = 0.4;
    cfg.time.t_end = 180.0;
    for p in &mut cfg.perturbation {
        p.cutoff = Some(150.0);
    }
    cfg
}

#[test]
fn presets_round_trip_through_json() {
    for name in PRESETS {
        let cfg = ExperimentConfig::preset(name).unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        cfg.validate().unwrap();
    }
    let a = ExperimentConfig::preset("burgers").unwrap().hash();
    let b = ExperimentConfig::preset("psystem").unwrap().hash();
    assert_ne!(a, b);
}

#[test]
fn validation_rejects_bad_configs() {
    let usage = |cfg: &ExperimentConfig| {
        let e = cfg.validate().unwrap_err();
        assert_eq!(e.class(), ErrorClass::Usage, "{e}");
        assert_eq!(e.class().exit_code(), 2);
    };
    let mut cfg = ExperimentConfig::preset("psystem").unwrap();
    cfg.perturbation[0].direction = Some(vec![1.0]);
    usage(&cfg);
    let mut cfg = ExperimentConfig::preset("psystem").unwrap();
    cfg.perturbation[1].amplitude = 1.0;
    usage(&cfg);
    let mut cfg = ExperimentConfig::preset("burgers").unwrap();
    cfg.mesh.x_min = 5.0;
    usage(&cfg);
    let mut cfg = ExperimentConfig::preset("burgers").unwrap();
    cfg.mesh.compare_spacing = Some(0.1);
    usage(&cfg);
    let mut cfg = ExperimentConfig::preset("burgers").unwrap();
    cfg.perturbation.clear();
    usage(&cfg);

    let text = serde_json::to_string(&ExperimentConfig::preset("burgers").unwrap())
        .unwrap()
        .replacen("\"label\"", "\"colour\":1,\"label\"", 1);
    assert_eq!(
        ExperimentConfig::from_json(&text).unwrap_err().class(),
        ErrorClass::Usage
    );
}

#[test]
fn small_run_is_deterministic_and_exports() {
    let cfg = small_burgers();
    let a = run_pipeline(&cfg).unwrap();
    let b = run_pipeline(&cfg).unwrap();
    let ja = serde_json::to_string(&a.report).unwrap();
    let jb = serde_json::to_string(&b.report).unwrap();
    assert_eq!(ja, jb);
    assert_eq!(a.report.config_hash, cfg.hash());
    assert!(a.report.mass_pass, "{:e}", a.report.mass_drift);

    let dir = tempfile::tempdir().unwrap();
    write_run(&a, dir.path()).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    for f in manifest["files"].as_array().unwrap() {
        assert!(dir.path().join(f.as_str().unwrap()).exists(), "{f}");
    }

    let plots = dir.path().join("plots");
    let set = emit_plots(dir.path(), &plots).unwrap();
    assert!(set.warnings.is_empty(), "{:?}", set.warnings);
    let decay: Vec<_> = set
        .files
        .iter()
        .filter(|f| {
            f.file_name()
                .unwrap()
                .to_string_lossy()
                .starts_with("decay_")
        })
        .collect();
    assert_eq!(decay.len(), 3);
    // t, norm and the reference column on every data line
    let text = std::fs::read_to_string(decay[0]).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), a.report.times.len());
    assert!(rows.iter().all(|r| r.split_whitespace().count() == 3));
    let heat = std::fs::read_to_string(plots.join("ratio_heatmap.dat")).unwrap();
    assert!(heat.contains("\n\n"), "blocks separated by blank lines");
}

#[test]
fn shifted_profile_perturbation_is_a_pure_shift() {
    let mut cfg = small_burgers();
    cfg.perturbation.truncate(1);
    cfg.perturbation[0].shape = Shape::ShiftedProfile;
    cfg.perturbation[0].amplitude = 0.05;
    let out = run_pipeline(&cfg).unwrap();
    // the shift is carried by δ* and the tracked residual stays at scheme error
    assert!((out.report.decomposition.delta_star - 0.05).abs() < 1e-3);
    let l1 = out.report.perturbation_l1;
    let norms = &out.report.verification.rates[0].norms;
    assert!(norms.iter().all(|n| *n < 0.05 * l1), "{norms:?}");
}

#[test]
fn green_function_remainder_is_bounded() {
    let g = green_check(0.05).unwrap();
    assert!(g.far_field_error < 0.05, "{}", g.far_field_error);
    for s in &g.sources {
        assert!(s.c_fit.is_finite() && s.change < 0.1, "{s:?}");
    }
    assert!(g.pass);
}
