//! Exit codes and file handling of the `adjsim` binary.

use std::io::Write;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adjsim"))
}

fn scenario_path(name: &str) -> String {
    format!("{}/../../scenarios/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn temp_scenario(content: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(content.as_bytes()).unwrap();
    f
}

#[test]
fn validate_ok_exits_zero() {
    let out = bin()
        .args(["validate", "--scenario", &scenario_path("figure1.scn")])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}

#[test]
fn validation_error_exits_one() {
    let f = temp_scenario("cluster 1\nnode X 0001\nedge X X\n");
    let out = bin()
        .args(["validate", "--scenario", f.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("self-link"));
}

#[test]
fn parse_error_exits_two() {
    let f = temp_scenario("nonsense here\n");
    let out = bin()
        .args(["validate", "--scenario", f.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn missing_file_exits_two() {
    let out = bin()
        .args(["validate", "--scenario", "/nonexistent.scn"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_trace_file() {
    let dir = tempfile::tempdir().unwrap();
    let trace_path = dir.path().join("out.csv");
    let out = bin()
        .args([
            "run",
            "--scenario",
            &scenario_path("figure1.scn"),
            "--trace",
            trace_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let trace = std::fs::read_to_string(&trace_path).unwrap();
    assert!(trace.lines().count() > 30);
    assert!(trace.contains("session_end"));
}

#[test]
fn run_summary_prints_energy_table() {
    let out = bin()
        .args(["run", "--scenario", &scenario_path("figure1.scn"), "--summary"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("energy per node"));
    assert!(text.contains("analytic cross-checks"));
}

#[test]
fn tables_prints_all_sections() {
    let out = bin()
        .args(["tables", "--scenario", &scenario_path("figure1.scn")])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for section in [
        "Router table (cluster 1)",
        "Router table (cluster 2)",
        "Controller table",
        "Adjacency matrix (cluster 1)",
        "Adjacency matrix (cluster 2)",
        "Complete info (cluster 1)",
    ] {
        assert!(text.contains(section), "missing {section}");
    }
}
