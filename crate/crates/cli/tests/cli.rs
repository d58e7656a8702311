use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn shipped() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/models/mtair.mtair.json")
}

fn mtair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtair")).args(args).env("MTAIR_THREADS", "2").output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8(bytes.to_vec()).unwrap()
}

#[test]
fn validate_cycle_reports_one_line() {
    let out = mtair(&["validate", fixture("cycle.mtair.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = text(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 1, "{stdout}");
    assert!(lines[0].contains("CYCLE"), "{stdout}");
}

#[test]
fn validate_ok_and_json() {
    let out = mtair(&["validate", shipped().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stdout));
    let out = mtair(&["validate", "--json", fixture("cycle.mtair.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_str(text(&out.stdout).trim()).unwrap();
    assert_eq!(v["code"], "CYCLE");
}

#[test]
fn lenient_downgrades_unknown_fields() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("extra.mtair.json");
    let doc = include_str!("fixtures/not.mtair.json").replacen("\"cruxes\"", "\"colour\": 1, \"cruxes\"", 1);
    std::fs::write(&path, doc).unwrap();
    let p = path.to_str().unwrap();
    assert_eq!(mtair(&["validate", p]).status.code(), Some(1));
    let out = mtair(&["validate", "--lenient", p]);
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out.stdout).contains("warning UNKNOWN_FIELD"));
}

#[test]
fn run_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let model = fixture("not.mtair.json");
    let mut reports = Vec::new();
    for name in ["one.json", "two.json"] {
        let path = dir.path().join(name);
        let out = mtair(&["run", model.to_str().unwrap(), "--samples", "100000", "--seed", "7", "--output", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
        assert!(text(&out.stdout).contains("b"));
        reports.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let v: Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(v["config"]["seed"], 7);
    assert!(v["engine_version"].as_str().unwrap().starts_with("mtair-core"));
    assert!(v.get("wall_time_ms").is_none());
}

#[test]
fn set_forces_values_and_names_bad_nodes() {
    let model = fixture("not.mtair.json");
    let m = model.to_str().unwrap();
    let out = mtair(&["run", m, "--samples", "100", "--set", "a=true", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(text(&out.stdout).lines().next().unwrap()).unwrap();
    assert_eq!(v["node"], "b");
    assert_eq!(v["probability_true"], 0.0);

    let out = mtair(&["run", m, "--set", "a=2022"]);
    assert_eq!(out.status.code(), Some(1));
    let err = text(&out.stderr);
    assert!(err.contains("KIND_MISMATCH") && err.contains("`a`"), "{err}");

    let out = mtair(&["run", m, "--set", "zz=true", "--json"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_str(text(&out.stderr).trim()).unwrap();
    assert_eq!(v["error"]["code"], "NODE_NOT_FOUND");
}

#[test]
fn usage_errors_exit_two() {
    let m = fixture("not.mtair.json");
    let m = m.to_str().unwrap();
    assert_eq!(mtair(&[]).status.code(), Some(2));
    assert_eq!(mtair(&["frobnicate", m]).status.code(), Some(2));
    assert_eq!(mtair(&["run"]).status.code(), Some(2));
    assert_eq!(mtair(&["run", m, "--samples", "many"]).status.code(), Some(2));
    assert_eq!(mtair(&["run", m, "--set", "noequals"]).status.code(), Some(2));
    assert_eq!(mtair(&["sensitivity", m]).status.code(), Some(2));
    assert_eq!(mtair(&["--help"]).status.code(), Some(0));
}

#[test]
fn run_errors_exit_one() {
    let m = fixture("not.mtair.json");
    let m = m.to_str().unwrap();
    assert_eq!(mtair(&["run", "/nonexistent/model.json"]).status.code(), Some(1));
    assert_eq!(mtair(&["run", m, "--preset", "Nobody"]).status.code(), Some(1));
    assert_eq!(mtair(&["run", fixture("cycle.mtair.json").to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(mtair(&["sensitivity", m, "--target", "zz"]).status.code(), Some(1));
}

#[test]
fn sensitivity_rows() {
    let m = fixture("not.mtair.json");
    let out = mtair(&["sensitivity", m.to_str().unwrap(), "--target", "b", "--cruxes", "a", "--samples", "500", "--seed", "1", "--json"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let rows: Vec<Value> = text(&out.stdout).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["delta"], -1.0);
}

#[test]
fn skeptic_preset_sets_table_values() {
    let out = mtair(&[
        "run",
        shipped().to_str().unwrap(),
        "--samples",
        "500",
        "--seed",
        "3",
        "--preset",
        "Skeptic",
        "--json",
        "--target",
        "takeoff.intelligence_explosion",
        "--target",
        "takeoff.discontinuity",
        "--target",
        "takeoff.takeoff_speed",
        "--target",
        "takeoff.distributed",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let rows: Vec<Value> = text(&out.stdout).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows[0]["probability_true"], 0.0);
    assert_eq!(rows[1]["probability_true"], 0.0);
    let cats = rows[2]["category_probabilities"].as_array().unwrap();
    let years = cats.iter().find(|c| c["label"] == "years_or_longer").unwrap();
    assert_eq!(years["probability"], 1.0);
    assert_eq!(rows[3]["probability_true"], 1.0);
}

#[test]
fn timing_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let m = fixture("not.mtair.json");
    let out = mtair(&["run", m.to_str().unwrap(), "--samples", "10", "--timing", "--output", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out.stderr).contains("wall time"));
    let v: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    assert!(v["wall_time_ms"].as_f64().unwrap() >= 0.0);
}

#[test]
fn in_process_entry_matches_binary() {
    let m = fixture("not.mtair.json");
    let args = ["mtair", "run", m.to_str().unwrap(), "--samples", "1000", "--seed", "5", "--json"];
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = mtair_cli::main_with(args, &mut out, &mut err);
    assert_eq!(code, 0);
    let bin = mtair(&args[1..]);
    assert_eq!(out, bin.stdout);
}
