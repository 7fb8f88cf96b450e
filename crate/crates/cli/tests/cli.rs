use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_incompat"));
    c.env_remove("INCOMPAT_SOLVER_TOL");
    c
}

fn scenario(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(scenario: &Path, extra: &[&str]) -> Output {
    bin().arg("run").arg("--scenario").arg(scenario).args(extra).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn nwise_paulis() {
    let dir = TempDir::new().unwrap();
    let s = scenario(&dir, "s.json", r#"{"assemblage":"pauli-xyz","task":"nwise","n":2}"#);
    let v = json(&run(&s, &[]));
    assert_eq!(v["task"], "nwise");
    let eta = v["visibility"].as_f64().unwrap();
    assert!((eta - (2f64.sqrt() + 1.0) / 3.0).abs() < 1e-3, "{eta}");
}

#[test]
fn jm_subset_is_one_based() {
    let dir = TempDir::new().unwrap();
    let s = scenario(&dir, "s.json", r#"{"assemblage":"xzh","task":"jm","subset":[1,2],"sweep":[0.7,0.72]}"#);
    let v = json(&run(&s, &[]));
    assert!((v["visibility"].as_f64().unwrap() - 0.5f64.sqrt()).abs() < 1e-4);
    assert_eq!(v["subset"], serde_json::json!([1, 2]));
    let d = v["decisions"].as_array().unwrap();
    assert_eq!(d[0]["member"], true);
    assert!(d[0]["witness_residual"].as_f64().unwrap() <= 1e-6);
    assert_eq!(d[1]["member"], false);
    assert!(d[1]["witness"].is_null());
}

#[test]
fn sim_grid_coarse_certificate() {
    let dir = TempDir::new().unwrap();
    let s = scenario(&dir, "s.json", r#"{"assemblage":"pauli-xyz","task":"sim-grid","n":2,"eta":0.8047,"ell":0.02}"#);
    let v = json(&run(&s, &["--ell", "0.1", "--jobs", "2"]));
    let c = &v["certificate"];
    assert_eq!(c["steps"], 10);
    assert_eq!(c["epsilon"].as_f64().unwrap(), 0.6);
    assert_eq!(c["grid_points_evaluated"], 1331);
    let nu = c["nu_g_star"].as_f64().unwrap();
    assert!((nu - 0.1953).abs() < 5e-3, "{nu}");
    assert_eq!(v["certifies_non_membership"], false);
}

#[test]
fn fast_flag_supplies_grid_step() {
    let dir = TempDir::new().unwrap();
    let s = scenario(&dir, "s.json", r#"{"assemblage":"xzh","task":"sim-grid","n":2}"#);
    assert_eq!(run(&s, &[]).status.code(), Some(1));
    let v = json(&run(&s, &["--fast"]));
    assert_eq!(v["certificate"]["steps"], 10);
}

#[test]
fn results_are_byte_stable() {
    let dir = TempDir::new().unwrap();
    let s = scenario(&dir, "s.json", r#"{"task":"fuzz","d":2,"m":3,"k":2,"n":2,"count":3,"seed":5}"#);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert!(run(&s, &["--out", a.to_str().unwrap(), "--jobs", "1"]).status.success());
    assert!(run(&s, &["--out", b.to_str().unwrap(), "--jobs", "2"]).status.success());
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);
    let v: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["report"]["violation_count"], 0);
    assert_eq!(v["report"]["cases"].as_array().unwrap().len(), 3);
}

#[test]
fn scenario_out_field_and_csv() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("profile.json");
    let body = serde_json::json!({
        "assemblage": "xzh",
        "task": "profile",
        "n": 2,
        "pre": [[[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]]],
        "out": out,
    });
    let s = scenario(&dir, "s.json", &body.to_string());
    let csv = dir.path().join("t.csv");
    let o = run(&s, &["--csv", csv.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let p = &v["profile"];
    assert_eq!(p["descriptor"], "xzh");
    assert!(p.get("runtimes").is_none());
    let fixed = p["sim_fixed"][0]["threshold"]["value"].as_f64().unwrap();
    assert!(fixed >= 0.8150 - 1e-3);
    let table = std::fs::read_to_string(csv).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "assemblage,set,n,eta,kind,status");
    assert_eq!(lines.len(), 7);
    assert!(lines[3].starts_with("xzh,SIM_2 (pre 1),2,0.81"));
}

#[test]
fn clone_bound_from_shape() {
    let dir = TempDir::new().unwrap();
    let s = scenario(&dir, "s.json", r#"{"task":"clone-bound","d":2,"m":3,"n":1}"#);
    let v = json(&run(&s, &[]));
    assert_eq!(v["exact"], "5/9");
    let s = scenario(&dir, "t.json", r#"{"assemblage":"pauli-xyz","task":"clone-bound","n":2}"#);
    assert_eq!(json(&run(&s, &[]))["exact"], "5/6");
}

#[test]
fn ncopy_dimension_guard_flag() {
    let dir = TempDir::new().unwrap();
    let s = scenario(&dir, "s.json", r#"{"assemblage":"pauli-xyz","task":"ncopy","n":2,"eta":0.86}"#);
    let v = json(&run(&s, &[]));
    assert!((v["visibility"].as_f64().unwrap() - 3f64.sqrt() / 2.0).abs() < 1e-3);
    assert!(v["decisions"][0]["witness_residual"].as_f64().unwrap() <= 1e-6);
    let o = run(&s, &["--max-copy-dim", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dimension guard"));
}

#[test]
fn invalid_input_exits_one() {
    let dir = TempDir::new().unwrap();
    for body in [
        "not json",
        r#"{"assemblage":"xzh","task":"nwise"}"#,
        r#"{"assemblage":"ghz","task":"jm"}"#,
        r#"{"assemblage":"xzh","task":"jm","subset":[0]}"#,
        r#"{"assemblage":"xzh","task":"jm","eta":1.5}"#,
        r#"{"assemblage":{"d":2,"measurements":[[[[[1,0],[0,0]],[[0,0],[0,0]]]]]},"task":"jm"}"#,
    ] {
        let s = scenario(&dir, "s.json", body);
        let o = run(&s, &[]);
        assert_eq!(o.status.code(), Some(1), "{body}");
        assert!(!o.stderr.is_empty());
    }
    let o = run(&dir.path().join("missing.json"), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn tolerance_precedence() {
    let dir = TempDir::new().unwrap();
    let s = scenario(&dir, "s.json", r#"{"assemblage":"xzh","task":"jm","subset":[1,2],"tol":1e-7}"#);
    assert_eq!(json(&run(&s, &[]))["tol"], 1e-7);
    let o = bin().env("INCOMPAT_SOLVER_TOL", "1e-6").args(["run", "--scenario"]).arg(&s).output().unwrap();
    assert_eq!(json(&o)["tol"], 1e-6);
    assert_eq!(json(&run(&s, &["--tol", "1e-9"]))["tol"], 1e-9);
    let o = bin().env("INCOMPAT_SOLVER_TOL", "abc").args(["run", "--scenario"]).arg(&s).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn reproduce_fast_passes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("summary.json");
    let o = bin().args(["reproduce", "--fast", "--out"]).arg(&out).output().unwrap();
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{table}");
    assert_eq!(table.lines().filter(|l| l.contains("PASS")).count(), 8, "{table}");
    assert!(table.lines().any(|l| l.contains("SKIPPED-FAST") && l.trim_start().starts_with('6')));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 9);
}

#[test]
fn reproduce_reports_corrupted_builtin() {
    let o = bin().args(["reproduce", "--fast", "--corrupt-builtin", "xzh"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let table = String::from_utf8_lossy(&o.stdout);
    let row1 = table.lines().find(|l| l.trim_start().starts_with("1 ")).unwrap();
    assert!(row1.contains("FAIL") && row1.contains("+2.929e-1"), "{row1}");
}
