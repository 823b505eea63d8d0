use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sqcat(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqcat")).args(args).current_dir(dir).env("SQCAT_THREADS", "1").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn monte_carlo_output_is_reproduced_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["concat", "run", "--code", "repetition", "--dz", "3,5", "--ratio", "0.01", "--shots", "2e3"];
    for name in ["a.json", "b.json"] {
        let o = sqcat(&[&args[..], &["--seed", "5", "--out", name]].concat(), dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = read_json(&dir.path().join("a.json"));
    assert_eq!(a["rows"], read_json(&dir.path().join("b.json"))["rows"]);
    assert_eq!(a["metadata"]["seed"], 5);
    assert_eq!(a["metadata"]["threads"], 1);
    assert_eq!(a["metadata"]["schema_version"], 1);
    assert!(a["metadata"]["git_revision"].is_string());
    assert!(a["metadata"]["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(a["rows"].as_array().unwrap().len(), 2);

    // the embedded config alone reproduces the numbers
    let o = sqcat(&["run", "--config", "a.json", "--out", "c.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(a["rows"], read_json(&dir.path().join("c.json"))["rows"]);

    let o = sqcat(&[&args[..], &["--seed", "6", "--out", "d.json"]].concat(), dir.path());
    assert_eq!(code(&o), 0);
    assert_ne!(a["rows"], read_json(&dir.path().join("d.json"))["rows"]);
}

#[test]
fn csv_output_reruns_from_its_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let o = sqcat(&["run", "memory-rates", "--nbar", "4", "--sweep", "r=0:1.6:33", "--predict-only", "--out", "rates.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    let lines: Vec<&str> = first.lines().collect();
    assert_eq!(lines[0], "r,eta,alpha_sq,gamma_z_pred,gamma_xy_pred");
    let meta = read_json(&dir.path().join("rates.csv.meta.json"));
    let skipped = meta["metadata"]["skipped"].as_array().unwrap().len();
    assert!(skipped > 0, "points beyond the largest squeezing are reported");
    assert_eq!(lines.len() - 1 + skipped, 33);
    assert!(meta["metadata"]["warnings"].as_array().unwrap().iter().any(|w| w["code"] == "over-squeezed"));

    let o = sqcat(&["run", "--config", "rates.csv.meta.json", "--out", "again.csv"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(first, std::fs::read_to_string(dir.path().join("again.csv")).unwrap());
}

#[test]
fn empty_sweep_writes_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let o = sqcat(&["run", "ei-curve", "--sweep", "gamma=0:0.1:0"], dir.path());
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "gamma,infidelity\n");

    let cfg =
        write_config(dir.path(), "empty.json", r#"{"schema_version": 1, "output": "empty.csv", "experiment": {"kind": "min-logical", "ratio": []}}"#);
    let o = sqcat(&["run", "--config", &cfg], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("empty.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
}

#[test]
fn schema_violations_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in [
        ("unknown_top.json", r#"{"schema_version": 1, "foo": 1, "experiment": {"kind": "ei-curve", "gamma": 0.01}}"#),
        ("unknown_inner.json", r#"{"schema_version": 1, "experiment": {"kind": "ei-curve", "gamma": 0.01, "foo": 1}}"#),
        ("version.json", r#"{"schema_version": 9, "experiment": {"kind": "ei-curve", "gamma": 0.01}}"#),
        ("kind.json", r#"{"schema_version": 1, "experiment": {"kind": "nope"}}"#),
        ("domain.json", r#"{"schema_version": 1, "experiment": {"kind": "ei-curve", "gamma": 0.5}}"#),
        ("syntax.json", r#"{"schema_version": 1,"#),
    ] {
        let cfg = write_config(dir.path(), name, text);
        let o = sqcat(&["run", "--config", &cfg], dir.path());
        assert_eq!(code(&o), 2, "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = sqcat(&["run", "memory-rates", "--sweep", "t=0:1:3"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn numerical_failure_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = sqcat(&["run", "gate-sweep", "--gate", "cx", "--formula", "--sweep", "t=0.1"], dir.path());
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("kappa2 T"));
}

fn violations(dir: &Path, name: &str, text: &str) -> Vec<String> {
    let cfg = write_config(dir, name, text);
    let o = sqcat(&["validate", &cfg], dir);
    assert_eq!(code(&o), 0);
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    report["violations"].as_array().unwrap().iter().map(|v| v["code"].as_str().unwrap().to_string()).collect()
}

#[test]
fn validate_reports_regime_violations() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(violations(d, "ok.json", r#"{"schema_version": 1, "experiment": {"kind": "gate-sweep", "gate": "cx", "t": [1, 2]}}"#).is_empty());
    assert!(violations(d, "ion_ok.json", r#"{"schema_version": 1, "experiment": {"kind": "ion"}}"#).is_empty());
    assert_eq!(
        violations(d, "cx.json", r#"{"schema_version": 1, "experiment": {"kind": "gate-sweep", "gate": "cx", "mode": "formula", "t": 0.1}}"#),
        ["formula-out-of-range"]
    );
    assert!(violations(d, "ion.json", r#"{"schema_version": 1, "experiment": {"kind": "ion", "eta0": 0.5}}"#).contains(&"lamb-dicke".to_string()));
    assert_eq!(
        violations(d, "toffoli.json", r#"{"schema_version": 1, "experiment": {"kind": "gate-sweep", "gate": "toffoli", "mode": "formula", "t": 1}}"#),
        ["formula-unavailable"]
    );
}
