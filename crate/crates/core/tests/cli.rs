//! Exit codes and output shape of the command-line driver.

use std::path::PathBuf;
use std::process::{Command, Output};

use nalgebra::DMatrix;
use num_complex::Complex64;
use quillen::laurent::LaurentCocycle;

fn quillen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quillen")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("quillen-cli-{}-{name}", std::process::id()))
}

fn write_cocycle(name: &str, degree: i32, scale: f64) -> PathBuf {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.25, -1.0]).map(|v| Complex64::new(scale * v, 0.1));
    let m = &m - DMatrix::identity(2, 2) * (m.trace() / Complex64::new(2.0, 0.0));
    let f = LaurentCocycle::monomial(m, degree).unwrap();
    let path = scratch(name);
    std::fs::write(&path, f.to_json_string()).unwrap();
    path
}

#[test]
fn omega_reports_both_values_and_the_config() {
    let a = write_cocycle("a.json", -1, 1.0);
    let b = write_cocycle("b.json", -2, 0.5);
    let out = quillen(&["omega", "--f1", a.to_str().unwrap(), "--f2", b.to_str().unwrap(), "--green", "disc", "--order", "8"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["rel_diff"].as_f64().unwrap() < 1e-6);
    assert_eq!(v["config"]["order"], 8);
    assert_eq!(v["config"]["green"], "disc");
    let out = quillen(&["omega", "--f1", a.to_str().unwrap(), "--f2", a.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["omega_series"].as_f64().unwrap().abs() > 1e-3 && v["rel_diff"].as_f64().unwrap() < 1e-6);
    let _ = std::fs::remove_file(a);
    let _ = std::fs::remove_file(b);
}

#[test]
fn unknown_config_key_is_a_configuration_error() {
    let cfg = scratch("bad.toml");
    std::fs::write(&cfg, "resolution = 12\nwibble = 3\n").unwrap();
    let out = quillen(&["spectrum", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wibble"));
    let _ = std::fs::remove_file(cfg);
    assert_eq!(quillen(&["spectrum", "--bogus", "1"]).status.code(), Some(2));
    assert_eq!(quillen(&["green-coeffs", "--radius", "1.5"]).status.code(), Some(2));
}

#[test]
fn key_not_used_by_the_command_is_rejected() {
    let out = quillen(&["spectrum", "--resolution", "8", "--f1", "x.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn degenerate_fit_window_is_a_numeric_failure() {
    let out = quillen(&["det", "--resolution", "12", "--window", "0.01,0.0100001", "--eps", "0.01"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn tolerance_violation_exits_with_four() {
    let out = quillen(&["variation", "--model", "disc", "--resolution", "12", "--tolerance", "1e-300"]);
    assert_eq!(out.status.code(), Some(4));
    let ok = quillen(&["variation", "--model", "disc", "--resolution", "12"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
}

#[test]
fn theta_curve_export() {
    let path = scratch("theta.csv");
    let out = quillen(&["export-curve", "--kind", "theta", "--spectrum", "1,2", "--times", "0.6931471805599453", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(&path).unwrap();
    assert_eq!(csv.lines().next(), Some("x,y"));
    assert!(csv.lines().nth(1).unwrap().ends_with(",0.75000000000000000"));
    let _ = std::fs::remove_file(path);
}

#[test]
fn selftest_subset_writes_a_report() {
    let path = scratch("report.txt");
    let out = quillen(&["selftest", "--seed", "3", "--criteria", "1,8", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report = std::fs::read_to_string(&path).unwrap();
    assert!(report.contains("criterion 01 PASS") && report.contains("criterion 08 PASS"));
    assert!(report.ends_with("2 of 2 criteria passed\n"));
    let _ = std::fs::remove_file(path);
}
