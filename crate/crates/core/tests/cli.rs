//! End-to-end checks of the command-line interface: exit codes, output files
//! and diagnostics.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_magicpipe"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn simulate_writes_trace_summary_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "p.json",
        r#"{"preset": "table1", "code_distances": [3, 9]}"#,
    );
    let out = dir.path().join("out");
    let res = run(&out, &["simulate", &spec]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    for f in ["trace.csv", "summary.csv", "manifest.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["preset"], "table1");
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("round,"));
}

#[test]
fn missing_distances_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "p.json", r#"{"preset": "table1"}"#);
    let res = run(&dir.path().join("out"), &["simulate", &spec]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("code_distances"));
}

#[test]
fn malformed_json_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "p.json",
        "{\"preset\": \"table1\",\n \"code_distances\": [3 9]}",
    );
    let res = run(&dir.path().join("out"), &["pareto", &spec]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 2"));
}

#[test]
fn unknown_field_and_even_distance_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "a.json",
        r#"{"code_distances": [3, 9], "budjet": 10}"#,
    );
    assert_eq!(
        run(&dir.path().join("o"), &["simulate", &spec])
            .status
            .code(),
        Some(2)
    );
    let spec = write(dir.path(), "b.json", r#"{"code_distances": [3, 8]}"#);
    assert_eq!(
        run(&dir.path().join("o"), &["simulate", &spec])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn buffer_below_burst_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "p.json",
        r#"{"preset": "table1", "code_distances": [3, 9], "budget": 5000, "buffer_size": 3}"#,
    );
    let res = run(&dir.path().join("out"), &["simulate", &spec]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("buffer too small"));
}

#[test]
fn bench_two_level_writes_one_row_per_pair() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = run(
        &out,
        &[
            "--preset",
            "supercond",
            "bench-two-level",
            "--d-min",
            "3",
            "--d-max",
            "7",
        ],
    );
    assert!(res.status.success());
    let csv = fs::read_to_string(out.join("two_level.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
}
