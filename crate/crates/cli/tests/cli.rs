use std::path::Path;
use std::process::{Command, Output};

use ris_swipt::config::{self, DEFAULT_TOML};
use ris_swipt::scene::Scenario;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ris-swipt")).args(args).output().expect("binary runs")
}

fn config_with(dir: &Path, name: &str, edits: &[(&str, &str)]) -> String {
    let mut text = DEFAULT_TOML.to_string();
    for (from, to) in edits {
        assert!(text.contains(from), "{from}");
        text = text.replacen(from, to, 1);
    }
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn small_config(dir: &Path) -> String {
    config_with(dir, "small.toml", &[("N = 20 ", "N = 4 ")])
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn default_config_round_trips() {
    let out = bin(&["default-config"]);
    assert!(out.status.success());
    let scn = config::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(scn, Scenario::default());
}

#[test]
fn solve_writes_a_non_increasing_trace() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("run.json");
    let out = bin(&["solve", "--seed", "7", "--scheme", "active", "--out", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let f1: Vec<f64> = v["f1"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!(!f1.is_empty());
    assert!(f1.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-6)), "{f1:?}");
    assert_eq!(v["record"]["converged"], true);
    assert_eq!(v["record"]["scheme"], "active");
    assert_eq!(v["record"]["iterations"].as_u64().unwrap() as usize, f1.len() - 1);
    assert_eq!(v["record"]["sinr_margin"].as_array().unwrap().len(), 4);
    assert_eq!(v["trace"]["status"], "converged");
}

#[test]
fn decibel_targets_are_converted_once() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let report = dir.path().join("run.json");
    let out = bin(&["solve", &cfg, "--scheme", "no_ris", "--out", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    for g in v["record"]["scenario"]["gamma"].as_array().unwrap() {
        assert!((g.as_f64().unwrap() - 10.0).abs() < 1e-12);
    }
}

#[test]
fn missing_field_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_with(dir.path(), "bad.toml", &[("M = 10 ", "")]);
    let out = bin(&["solve", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("`M`"), "{err}");

    let cfg = config_with(dir.path(), "unit.toml", &[("gamma = \"10 dB\"", "gamma = \"10 furlongs\"")]);
    let out = bin(&["sweep", &cfg, "--axis", "N", "--values", "4", "--out", dir.path().join("x.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("gamma"));
}

#[test]
fn interference_limited_scenario_exits_two() {
    // one antenna, two users, 10 dB each: no power allocation reaches both targets
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_with(dir.path(), "inf.toml", &[("M = 10 ", "M = 1 "), ("K = 4 ", "K = 2 "), ("N = 20 ", "N = 4 ")]);
    let out = bin(&["solve", &cfg, "--scheme", "no_ris"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sweep_writes_one_row_per_scheme_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let csv_path = dir.path().join("s.csv");
    let out = bin(&[
        "sweep", &cfg, "--axis", "p_max", "--values", "15", "--trials", "1", "--schemes", "active,passive,no_ris",
        "--workers", "2", "--out", csv_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = csv_rows(&csv_path);
    assert_eq!(header, ris_swipt_cli::output::SWEEP_HEADER);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows.iter().map(|r| r[1].as_str()).collect::<Vec<_>>(), ["active", "passive", "no_ris"]);
    for r in &rows {
        assert_eq!(r[0], "1");
        assert_eq!(r[3], "15");
        assert_eq!(r[6], "true");
        assert!(r[13].is_empty());
        let total: f64 = r[10].parse().unwrap();
        assert!(total > 0.0 && !r[10].contains('e'));
    }
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    assert_eq!(summary["cells"].as_array().unwrap().len(), 3);
    assert_eq!(summary["axis"], "p_max");
}

#[test]
fn timing_fills_the_wall_clock_column() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let csv_path = dir.path().join("t.csv");
    let out = bin(&["sweep", &cfg, "--axis", "N", "--values", "2", "--trials", "1", "--schemes", "no_ris", "--timing", "--out", csv_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let (_, rows) = csv_rows(&csv_path);
    assert!(rows[0][13].parse::<f64>().unwrap() >= 0.0);
}

#[test]
fn convergence_emits_one_row_per_outer_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let csv_path = dir.path().join("c.csv");
    let out = bin(&["convergence", &cfg, "--seeds", "1", "--pmax-list", "10,15", "--out", csv_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = csv_rows(&csv_path);
    assert_eq!(header, ris_swipt_cli::output::CONVERGENCE_HEADER);
    for p in ["10", "15"] {
        let family: Vec<&Vec<String>> = rows.iter().filter(|r| r[1] == p).collect();
        assert!(!family.is_empty());
        let f1: Vec<f64> = family.iter().map(|r| r[5].parse().unwrap()).collect();
        for (i, r) in family.iter().enumerate() {
            assert_eq!(r[4], i.to_string());
            assert_eq!(r[8], "converged");
        }
        assert!(f1.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-6)), "{f1:?}");
    }
}
