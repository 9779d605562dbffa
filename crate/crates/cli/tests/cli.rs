use std::path::Path;
use std::process::{Command, Output};

fn verify(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_verify")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join("summary.json")).unwrap()).unwrap()
}

const FAST: &[&str] = &[
    "--mode",
    "sharpness",
    "--instance",
    "horizontal_hardy",
    "--beta",
    "1",
    "--k-max",
    "2",
    "--random-fields",
    "2",
];

#[test]
fn unknown_instance_lists_valid_ids() {
    let o = verify(&["--instance", "rellich"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("unknown instance"), "{e}");
    assert!(e.contains("classical_rellich") && e.contains("polarizable_drift_rellich"), "{e}");
}

#[test]
fn malformed_numbers_are_configuration_errors() {
    let o = verify(&["--gamma", "0.5,abc"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("malformed number"));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "seed = 1\nfields = many\n").unwrap();
    let o = verify(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_is_an_error() {
    let o = verify(&["--config", "/nonexistent/verify.cfg"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_config_uses_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.cfg");
    std::fs::write(&cfg, "").unwrap();
    let out = dir.path().join("out");
    let mut args = vec!["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(FAST);
    let o = verify(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = summary(&out);
    assert_eq!(s["config"]["group"], "euclidean:5");
    assert_eq!(s["config"]["seed"], 0);
    assert_eq!(s["config"]["gamma"][0], 0.5);
    assert_eq!(s["config"]["quadrature"]["order"], 8);
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "gamma = 0.25\nseed = 4\n").unwrap();
    let out = dir.path().join("out");
    let mut args = vec!["--config", cfg.to_str().unwrap(), "--gamma", "-1.5", "--out", out.to_str().unwrap()];
    args.extend_from_slice(FAST);
    let o = verify(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = summary(&out);
    assert_eq!(s["config"]["gamma"][0], -1.5);
    assert_eq!(s["config"]["seed"], 4);
}

#[test]
fn repeated_runs_write_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let mut args = vec!["--out", out.to_str().unwrap(), "--seed", "12"];
        args.extend_from_slice(FAST);
        let o = verify(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        files.push(std::fs::read(out.join("ratios.csv")).unwrap());
        for f in ["reports.json", "failures.json", "summary.json"] {
            assert!(out.join(f).exists());
        }
    }
    assert_eq!(files[0], files[1]);
    assert!(files[0].starts_with(b"instance,group,params,k,C,ratio,err\n"));
}

#[test]
fn failing_gates_exit_with_one() {
    // The gap gate at k = 8 fails for the weighted Rellich family on ℝ³.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = verify(&[
        "--mode",
        "sharpness",
        "--group",
        "euclidean:3",
        "--instance",
        "horizontal_weighted_rellich",
        "--delta",
        "-1",
        "--random-fields",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let failures: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("failures.json")).unwrap()).unwrap();
    assert_eq!(failures[0]["check"], "gap");
}

#[test]
fn unwritable_output_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = blocker.join("out");
    let mut args = vec!["--out", out.to_str().unwrap()];
    args.extend_from_slice(FAST);
    let o = verify(&args);
    assert_eq!(o.status.code(), Some(2));
}
