//! Exit codes and output shape of the `strata` binary.

use std::process::{Command, Output};

fn strata(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_strata")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn sample_then_classify_through_a_file() {
    let dir = std::env::temp_dir().join(format!("strata-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("pair.json");
    let out = strata(&["construct", "--n", "3", "--m1", "1", "--mm1", "2", "--output", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = strata(&["classify", "--input", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    let sig = &v["signature"];
    assert_eq!((sig["m1"].as_u64(), sig["m_minus1"].as_u64()), (Some(1), Some(2)));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn malformed_input_exits_one() {
    let dir = std::env::temp_dir().join(format!("strata-bad-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.json");
    std::fs::write(&path, "{\"J\": {\"rows\": 2,").unwrap();
    let out = strata(&["classify", "--input", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn infeasible_and_invalid_requests_exit_two() {
    assert_eq!(strata(&["construct", "--n", "3", "--m1", "1", "--mm1", "1", "--metric", "identity"]).status.code(), Some(2));
    assert_eq!(strata(&["verify", "--tol-rel=-1"]).status.code(), Some(2));
}

#[test]
fn verify_is_clean_at_defaults_and_flags_coarse_tolerances() {
    let out = strata(&["verify", "--seeds", "40"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["all_passed"], serde_json::Value::Bool(true));
    assert_eq!(strata(&["verify", "--seeds", "100", "--tol-rel", "0.1"]).status.code(), Some(3));
}

#[test]
fn field_fixture_reports_strata_counts() {
    let out = strata(&["field", "--fixture", "quat_rotation", "--grid", "16"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = strata(&["field", "--fixture", "line_drop", "--grid", "9", "--format", "csv"]);
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(text.starts_with("x0,x1,m1,m_minus1,s,k,component"));
    assert_eq!(text.lines().count(), 1 + 81);
}
