use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

const LAGRANGIAN: &str = r#"{"family": "mechanical", "potential": {"cos_coeffs": [[1, 1.0]]}}"#;

fn weakkam(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_weakkam")).args(args).output().unwrap()
}

fn config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

fn aim_body(seed: u64) -> String {
    format!(
        r#"{{"kind": "aim", "lagrangian": {LAGRANGIAN}, "grid": {{"d": 1, "n": 256}}, "seed": {seed},
            "aim": {{"starts": 1}}}}"#
    )
}

#[test]
fn cell_run_succeeds_and_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        &format!(r#"{{"kind": "cell", "lagrangian": {LAGRANGIAN}, "grid": {{"d": 1, "n": 64}}}}"#),
    );
    let out = tmp.path().join("out");
    let res = weakkam(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("hbar[cell]"));
    assert!(stdout.contains("PASS hbar_matches_max_potential"));
    let report: Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert!((report["hbar_estimates"]["cell"].as_f64().unwrap() - 1.0).abs() < 0.05);
    for name in ["config.json", "cell_phi.csv", "manifest.json"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
}

#[test]
fn malformed_config_is_a_usage_error_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), r#"{"kind": "cell", "grid": "#);
    let out = tmp.path().join("out");
    let res = weakkam(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());

    let cfg = config(
        tmp.path(),
        &format!(r#"{{"kind": "cell", "lagrangian": {LAGRANGIAN}, "grid": {{"d": 1, "n": 48}}}}"#),
    );
    assert_eq!(weakkam(&["run", &cfg, "--out", out.to_str().unwrap()]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn missing_output_directory_and_seed_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), &aim_body(1));
    assert_eq!(weakkam(&["run", &cfg]).status.code(), Some(2));
    let unseeded = aim_body(1).replace(r#""seed": 1,"#, "");
    let cfg = config(tmp.path(), &unseeded);
    let out = tmp.path().join("out");
    assert_eq!(weakkam(&["run", &cfg, "--out", out.to_str().unwrap()]).status.code(), Some(2));
    // a seed on the command line fills the gap
    let res = weakkam(&["run", &cfg, "--out", out.to_str().unwrap(), "--seed", "4", "--quiet"]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(res.stdout.is_empty());
}

#[test]
fn seeded_runs_repeat_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), &aim_body(9));
    let dirs: Vec<_> = ["a", "b", "c"].iter().map(|d| tmp.path().join(d)).collect();
    for (dir, seed) in dirs.iter().zip(["9", "9", "10"]) {
        let res = weakkam(&["run", &cfg, "--out", dir.to_str().unwrap(), "--seed", seed, "--quiet"]);
        assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    }
    for name in ["aim_runs.csv", "aim_process.csv", "cell_phi.csv"] {
        let read = |i: usize| fs::read(dirs[i].join(name)).unwrap();
        assert_eq!(read(0), read(1), "{name} differs between identical runs");
    }
    assert_ne!(
        fs::read(dirs[0].join("aim_runs.csv")).unwrap(),
        fs::read(dirs[2].join("aim_runs.csv")).unwrap()
    );
}

#[test]
fn failed_assertion_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    // a loose cell tolerance cannot be met within two iterations
    let cfg = config(
        tmp.path(),
        &format!(
            r#"{{"kind": "cell", "lagrangian": {LAGRANGIAN}, "grid": {{"d": 1, "n": 64}},
                "cell": {{"tol": 1e-12, "max_iter": 2}}}}"#
        ),
    );
    let out = tmp.path().join("out");
    let res = weakkam(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1), "{}", String::from_utf8_lossy(&res.stdout));
    let report: Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
}
