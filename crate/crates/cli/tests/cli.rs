use std::path::Path;
use std::process::{Command, Output};

fn smci(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smci")).args(args).current_dir(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = smci(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn with_model(dir: &Path) {
    ok(dir, &["gen-model", "--graph", "grid:3x3", "--seed", "2", "--out", "m.json"]);
    ok(dir, &["sample", "--model", "m.json", "--num", "30", "--anneal-sweeps", "50", "--seed", "2", "--out", "s.csv"]);
}

#[test]
fn sample_file_has_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    with_model(dir.path());
    let text = read(dir.path(), "s.csv");
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# n=9 m=30 seed=2"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().all(|r| r.split(',').all(|v| v == "1" || v == "-1") && r.split(',').count() == 9));
}

#[test]
fn estimate_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    with_model(dir.path());
    ok(dir.path(), &["estimate", "--model", "m.json", "--samples", "s.csv", "--method", "smci1", "--target", "0,1", "--out", "e.csv"]);
    let text = read(dir.path(), "e.csv");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "target,method,M,estimate");
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&fields[..3], &["0;1", "smci1", "30"]);
    assert!(fields[3].parse::<f64>().unwrap().abs() <= 1.0);
}

#[test]
fn exact_lists_means_and_edges() {
    let dir = tempfile::tempdir().unwrap();
    with_model(dir.path());
    ok(dir.path(), &["exact", "--model", "m.json", "--out", "x.csv"]);
    // header + 9 means + 12 grid edges
    assert_eq!(read(dir.path(), "x.csv").lines().count(), 22);
}

#[test]
fn invalid_target_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    with_model(dir.path());
    let out = smci(dir.path(), &["estimate", "--model", "m.json", "--samples", "s.csv", "--method", "mci", "--target", "42"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn gsmci_needs_region_containing_target() {
    let dir = tempfile::tempdir().unwrap();
    with_model(dir.path());
    let out = smci(
        dir.path(),
        &["estimate", "--model", "m.json", "--samples", "s.csv", "--method", "gsmci", "--target", "0,1", "--region", "0,3"],
    );
    assert!(!out.status.success());
}

#[test]
fn command_line_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"graph": "grid:2x2", "seed": 5, "out": "a.json"}"#).unwrap();
    ok(dir.path(), &["gen-model", "--config", "c.json"]);
    ok(dir.path(), &["gen-model", "--config", "c.json", "--seed", "6", "--out", "b.json"]);
    ok(dir.path(), &["gen-model", "--graph", "grid:2x2", "--seed", "5", "--out", "c5.json"]);
    assert_eq!(read(dir.path(), "a.json"), read(dir.path(), "c5.json"));
    assert_ne!(read(dir.path(), "a.json"), read(dir.path(), "b.json"));
}

#[test]
fn learn_writes_trace_and_model() {
    let dir = tempfile::tempdir().unwrap();
    with_model(dir.path());
    ok(
        dir.path(),
        &["learn", "--graph", "grid:3x3", "--data", "s.csv", "--method", "fixed-smci1", "--steps", "20", "--trace", "t.csv", "--out", "l.json"],
    );
    assert_eq!(read(dir.path(), "t.csv").lines().count(), 21);
    assert!(read(dir.path(), "l.json").contains("\"edges\""));
}

#[test]
fn learn_accepts_graph_json() {
    let dir = tempfile::tempdir().unwrap();
    with_model(dir.path());
    std::fs::write(dir.path().join("g.json"), r#"{"n": 9, "edges": [[0, 1], [1, 2], [3, 4]]}"#).unwrap();
    ok(dir.path(), &["learn", "--graph", "g.json", "--data", "s.csv", "--method", "fixed-mci", "--steps", "5", "--out", "l.json"]);
    let learned = read(dir.path(), "l.json");
    assert_eq!(learned.matches('[').count(), 5);
}
