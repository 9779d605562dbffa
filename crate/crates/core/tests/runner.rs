use rellich_lab::catalog::{InstanceId, Params};
use rellich_lab::runner::{
    execute, parameter_matrix, params_label, parse_config_text, ratios_csv, resolve, run, ConfigError,
    ExperimentConfig, Mode, Setting,
};

fn cfg_from(text: &str, flags: &[Setting]) -> Result<ExperimentConfig, ConfigError> {
    resolve(&parse_config_text(text)?, flags)
}

#[test]
fn empty_configuration_gives_defaults() {
    let cfg = cfg_from("", &[]).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
    let cfg = cfg_from("# only a comment\n\n   \n", &[]).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
    assert_eq!(cfg.instances.len(), 11);
}

#[test]
fn file_settings_are_applied() {
    let text = "mode = sharpness\ngroup = heisenberg:1  # comment\ninstance = horizontal_hardy, kombe_rellich\n\
                beta = 0, 0.5\ngamma = 0.3,1\ndrift_a = 1,0; 0,2\nseed = 9\nk_max = 3\nquad_tol = 1e-7\nout = /tmp/x\n";
    let cfg = cfg_from(text, &[]).unwrap();
    assert_eq!(cfg.mode, Mode::Sharpness);
    assert_eq!(cfg.group, "heisenberg:1");
    assert_eq!(cfg.instances, vec![InstanceId::HorizontalHardy, InstanceId::KombeRellich]);
    assert_eq!(cfg.beta, Some(vec![0.0, 0.5]));
    assert_eq!(cfg.gamma, vec![0.3, 1.0]);
    assert_eq!(cfg.drift_a, vec![vec![1.0, 0.0], vec![0.0, 2.0]]);
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.k_max, 3);
    assert_eq!(cfg.quadrature.rel_tol, 1e-7);
    assert_eq!(cfg.out.to_str(), Some("/tmp/x"));
    // Default drift direction follows the group.
    let cfg = cfg_from("group = heisenberg:2", &[]).unwrap();
    assert_eq!(cfg.drift_a, vec![vec![1.0, 0.0, 0.0, 0.0]]);
}

#[test]
fn flags_take_precedence_over_the_file() {
    let flags = [Setting::flag("gamma", "2"), Setting::flag("k-max", "4")];
    let cfg = cfg_from("gamma = 0.25\nk_max = 6\nseed = 3", &flags).unwrap();
    assert_eq!(cfg.gamma, vec![2.0]);
    assert_eq!(cfg.k_max, 4);
    assert_eq!(cfg.seed, 3);
}

#[test]
fn configuration_errors_are_reported_with_their_origin() {
    let err = cfg_from("seed = 1\ncolour = red", &[]).unwrap_err();
    assert!(matches!(err, ConfigError::Line { line: 2, .. }), "{err}");
    assert!(err.to_string().contains("quad_order"));
    let err = cfg_from("gamma = 0.5, x", &[]).unwrap_err();
    assert!(matches!(err, ConfigError::Line { line: 1, .. }), "{err}");
    assert!(err.to_string().contains("malformed number"));
    let err = cfg_from("", &[Setting::flag("fields", "-3")]).unwrap_err();
    assert!(matches!(err, ConfigError::Flag { .. }), "{err}");
    assert!(cfg_from("just text", &[]).is_err());
    assert!(cfg_from("group = heisenberg:0", &[]).is_err());
    assert!(cfg_from("mode = everything", &[]).is_err());
    assert!(cfg_from("drift_a = 1,0,0", &[]).is_err());
    assert!(cfg_from("quad_order = 2", &[]).is_err());
    assert!(cfg_from("k_max = 0", &[]).is_err());
    assert!(cfg_from("gamma = inf", &[]).is_err());
    let err = cfg_from("instance = rellich", &[]).unwrap_err();
    assert!(err.to_string().contains("classical_rellich"));
}

#[test]
fn modes_parse_and_display() {
    for m in ["identities", "inequalities", "sharpness", "decomposition", "symmetry", "all"] {
        let mode: Mode = m.parse().unwrap();
        assert_eq!(mode.to_string(), m);
    }
}

#[test]
fn parameter_matrix_splits_admissible_combinations() {
    let cfg = cfg_from("delta = -1, -2, 0.5", &[]).unwrap();
    let g = cfg.group_model();
    let (ok, rejected) = parameter_matrix(&InstanceId::HorizontalWeightedRellich.instance(), &g, &cfg);
    assert_eq!(ok, vec![Params::delta(-1.0), Params::delta(-2.0)]);
    assert_eq!(rejected.len(), 1);
    assert_eq!(params_label(&rejected[0].0), "delta=0.5");
    let cfg = ExperimentConfig::default();
    let (ok, rejected) = parameter_matrix(&InstanceId::DaviesHinzWeighted.instance(), &g, &cfg);
    assert_eq!(ok.len(), 3);
    assert!(rejected.is_empty());
    assert!(ok.iter().all(|p| p.alpha == Some(-0.25)));
    let (ok, _) = parameter_matrix(&InstanceId::ClassicalRellich.instance(), &g, &cfg);
    assert_eq!(ok, vec![Params::default()]);
    assert_eq!(params_label(&Params::delta(-1.0).with_p(2.0)), "delta=-1;p=2");
}

#[test]
fn identities_mode_passes_on_heisenberg() {
    let cfg = cfg_from("mode = identities\ngroup = heisenberg:1\npoints = 50", &[]).unwrap();
    let out = execute(&cfg);
    assert_eq!(out.exit_code(), 0, "{:?}", out.failures);
    assert!(out.summary.identities.iter().any(|c| c.name == "polarizable"));
}

#[test]
fn sharpness_outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "mode = sharpness\ngroup = euclidean:5\ninstance = horizontal_hardy\nbeta = 1\nk_max = 2\nrandom_fields = 2\nout = {}",
        dir.path().join("a").display()
    );
    let a = run(&cfg_from(&text, &[]).unwrap()).unwrap();
    let b = run(&cfg_from(&text, &[Setting::flag("out", dir.path().join("b").display().to_string())]).unwrap()).unwrap();
    assert_eq!(a.exit_code(), 0, "{:?}", a.failures);
    let csv_a = std::fs::read(dir.path().join("a/ratios.csv")).unwrap();
    let csv_b = std::fs::read(dir.path().join("b/ratios.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    assert_eq!(ratios_csv(&a.summary.sharpness).unwrap().as_bytes(), &csv_a[..]);
    let text = String::from_utf8(csv_a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("instance,group,params,k,C,ratio,err"));
    assert_eq!(lines.count(), 2);
    for f in ["reports.json", "failures.json", "summary.json"] {
        assert!(dir.path().join("a").join(f).exists());
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["exit_code"], 0);
    assert_eq!(summary["config"]["mode"], "sharpness");
    assert_eq!(b.summary.sharpness, a.summary.sharpness);
}

#[test]
fn inequality_mode_records_skipped_combinations() {
    let cfg = cfg_from("mode = inequalities\ninstance = horizontal_weighted_rellich\ndelta = -1, 1\nfields = 2", &[])
        .unwrap();
    let out = execute(&cfg);
    let s = out.summary.inequalities.unwrap();
    assert_eq!(s.evaluated, 2);
    assert_eq!(s.skipped.len(), 1);
    assert_eq!(out.summary.exit_code, 0);
    assert!(s.min_relative_deficit.unwrap() >= 0.0);
}

#[test]
fn character_sign_is_configurable() {
    use rellich_lab::ops::CharacterSign;
    assert_eq!(cfg_from("", &[]).unwrap().character_sign, CharacterSign::Positive);
    let cfg = cfg_from("character_sign = negative", &[]).unwrap();
    assert_eq!(cfg.character_sign, CharacterSign::Negative);
    assert!(cfg_from("character_sign = minus", &[]).is_err());
    // Flipping the sign and the direction together leaves the deficits unchanged.
    let base = "mode = inequalities\ninstance = drift_rellich_stratified\ndelta = -1\nfields = 2\ngamma = 0.7\n";
    let a = execute(&cfg_from(&format!("{base}drift_a = 0.6,0.8,0,0,0"), &[]).unwrap());
    let b = execute(&cfg_from(&format!("{base}drift_a = -0.6,-0.8,0,0,0\ncharacter_sign = negative"), &[]).unwrap());
    for (x, y) in a.reports.iter().zip(&b.reports) {
        assert_eq!(x.deficit, y.deficit);
    }
    assert_eq!(a.reports.len(), 2);
}
