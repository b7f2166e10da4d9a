use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cellfree::experiments::output::content_digest;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellfree")).args(args).output().expect("binary runs")
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn pmf_los_writes_one_table_per_m_with_stable_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let o = run(&["pmf-los", "--m", "128,1024", "--drops", "50", "--seed", "7", "--out", dir.path().to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for m in [128, 1024] {
        let name = format!("pmf_los_m{m}.csv");
        let (x, y) = (read(&a.path().join(&name)), read(&b.path().join(&name)));
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs between runs");
    }
}

#[test]
fn regression_mode_rates_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let common = ["rates", "--m", "24", "--k", "3", "--trials", "20", "--drops", "2", "--snr", "0,20,40", "--seed", "5"];
    let mut first = common.to_vec();
    first.extend(["--regression", "--out", a.path().to_str().unwrap()]);
    let mut second = common.to_vec();
    // a different worker count must not change the numbers either
    second.extend(["--threads", "3", "--out", b.path().to_str().unwrap()]);
    for args in [first, second] {
        let o = run(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(read(&a.path().join("rates.csv")), read(&b.path().join("rates.csv")));
}

#[test]
fn sidecar_records_digest_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["geometry", "--m", "6", "--k", "2", "--seed", "11", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let csv = read(&dir.path().join("geometry.csv"));
    let side: serde_json::Value = serde_json::from_slice(&read(&dir.path().join("geometry.json"))).unwrap();
    assert_eq!(side["csv_digest"], content_digest(&csv));
    assert_eq!(side["seed"], 11);
    assert_eq!(side["config"]["n_aps"], 6);
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 6 + 2);
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"n_aps": 9, "n_ues": 4, "seed": 3}"#).unwrap();
    let out = dir.path().join("out");
    let o = run(&["geometry", "--config", cfg.to_str().unwrap(), "--k", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let side: serde_json::Value = serde_json::from_slice(&read(&out.join("geometry.json"))).unwrap();
    assert_eq!((side["config"]["n_aps"].as_u64(), side["config"]["n_ues"].as_u64(), side["seed"].as_u64()), (Some(9), Some(2), Some(3)));
}

#[test]
fn missing_out_fails() {
    let o = run(&["pmf-los", "--m", "128", "--drops", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn usage_budget_and_config_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(&["rates", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
    let o = run(&["rates", "--budget", "100", "--out", out]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"), "{}", String::from_utf8_lossy(&o.stderr));
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"n_apps": 3}"#).unwrap();
    assert_eq!(run(&["geometry", "--config", bad.to_str().unwrap(), "--out", out]).status.code(), Some(2));
    assert_eq!(run(&["rates", "--trials", "1", "--out", out]).status.code(), Some(2));
}

#[test]
fn validate_reports_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("v.json");
    fs::write(&cfg, r#"{"validate_geometries": 2}"#).unwrap();
    let o = run(&["validate", "--config", cfg.to_str().unwrap(), "--trials", "2e3", "--seed", "1", "--out", dir.path().to_str().unwrap()]);
    let code = o.status.code();
    assert!(code == Some(0) || code == Some(4), "{code:?}");
    let csv = String::from_utf8(read(&dir.path().join("validate.csv"))).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert!(rows.len() > 20);
    assert!(rows.iter().all(|r| r.ends_with(",true") || r.ends_with(",false")));
    assert!(rows.iter().any(|r| r.contains(",mean_gkk,printed,")));
    let side: serde_json::Value = serde_json::from_slice(&read(&dir.path().join("validate.json"))).unwrap();
    assert_eq!(side["summary"]["passed"].as_bool(), Some(code == Some(0)));
}
