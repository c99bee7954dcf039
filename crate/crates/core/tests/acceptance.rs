//! One pass/fail line per acceptance criterion, with the runtime limits
//! applied to the timed ones. Runs without the libtest harness so the lines
//! are printed even when everything passes.

use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use quillen::selftest::{run_criterion, CRITERIA};

const SEED: u64 = 20_240_611;

fn limit(id: u8) -> Option<Duration> {
    let secs = match id {
        1 => 1,
        2 => 10,
        3 | 7 => 60,
        4 => 120,
        _ => return None,
    };
    Some(Duration::from_secs(secs))
}

fn report_file(tag: &str) -> PathBuf {
    std::env::temp_dir().join(format!("quillen-acceptance-{}-{tag}.txt", std::process::id()))
}

fn selftest_bytes(path: &PathBuf) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_quillen"))
        .args(["selftest", "--seed", &SEED.to_string(), "--criteria", "1,2,3,4,5,6,7,8,9,10,11", "--out"])
        .arg(path)
        .status()
        .expect("selftest binary runs");
    assert!(status.code().is_some(), "selftest terminated by signal");
    let bytes = std::fs::read(path).expect("report file written");
    let _ = std::fs::remove_file(path);
    bytes
}

fn main() -> ExitCode {
    let mut failures = Vec::new();
    for &(id, name) in CRITERIA.iter().filter(|(id, _)| *id <= 11) {
        let start = Instant::now();
        let result = run_criterion(id, SEED);
        let took = start.elapsed();
        let (mut passed, mut detail) = match result {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if let Some(max) = limit(id) {
            if took > max {
                passed = false;
                detail.push_str(&format!("; over the {}s limit", max.as_secs()));
            }
        }
        println!("criterion {id:02} {} {name}: {detail} [{:.2}s]", if passed { "PASS" } else { "FAIL" }, took.as_secs_f64());
        if !passed {
            failures.push(id);
        }
    }

    let first = selftest_bytes(&report_file("a"));
    let second = selftest_bytes(&report_file("b"));
    let same = !first.is_empty() && first == second;
    println!(
        "criterion 12 {} {}: two selftest runs with seed {SEED} {}",
        if same { "PASS" } else { "FAIL" },
        CRITERIA[11].1,
        if same { "wrote byte-identical reports" } else { "wrote different reports" }
    );
    if !same {
        failures.push(12);
    }
    if failures.is_empty() {
        println!("all 12 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failures:?}");
        ExitCode::FAILURE
    }
}
