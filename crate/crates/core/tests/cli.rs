use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn plclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plclab")).env_remove("PLCLAB_SEED").args(args).output().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn rational(v: &Value) -> (u64, u64) {
    (v["numerator"].as_u64().unwrap(), v["denominator"].as_u64().unwrap())
}

#[test]
fn jplc_run_reports_capacity() {
    let out = plclab(&["--mode", "jplc", "--servers", "2", "--messages", "3", "--support", "2", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["downloaded_symbols"], 12);
    assert_eq!(rational(&r["rate"]), (2, 3));
    assert_eq!(r["rate_equals_capacity"], true);
    assert_eq!(r["recovered"], true);
}

#[test]
fn same_seed_same_bytes() {
    let args = ["--mode", "iplc", "--messages", "5", "--support", "2", "--seed", "11", "--trials", "5", "--format", "csv"];
    let a = plclab(&args);
    let b = plclab(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let c = plclab(&["--mode", "iplc", "--messages", "5", "--support", "2", "--seed", "12", "--trials", "5"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn seed_from_environment() {
    let base = ["--mode", "jplc", "--messages", "4", "--support", "2", "--trials", "3"];
    let explicit = plclab(&[&base[..], &["--seed", "5"]].concat());
    let env = Command::new(env!("CARGO_BIN_EXE_plclab")).env("PLCLAB_SEED", "5").args(base).output().unwrap();
    assert_eq!(env.status.code(), Some(0));
    assert_eq!(explicit.stdout, env.stdout);
}

#[test]
fn capacity_table_row() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("table.json");
    let out = plclab(&["--mode", "capacity-table", "--servers", "2", "--messages", "5", "--format", "csv", "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(out_path.with_extension("csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("2,3,2,2,3,")), "{csv}");
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let row = r["rows"].as_array().unwrap().iter().find(|x| x["k"] == 5 && x["d"] == 3).unwrap();
    assert!(row["iplc"].is_null());
}

#[test]
fn out_of_scope_and_usage_errors() {
    let out = plclab(&["--mode", "iplc", "--messages", "7", "--support", "4"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("does not divide"), "{err}");

    assert_eq!(plclab(&["--mode", "jplc", "--messages", "3"]).status.code(), Some(1));
    assert_eq!(plclab(&["--mode", "nope"]).status.code(), Some(1));
    assert_eq!(plclab(&["--help"]).status.code(), Some(0));
    assert_eq!(plclab(&["--mode", "jplc", "--messages", "3", "--support", "2", "--field", "2"]).status.code(), Some(1));
}

#[test]
fn audit_exit_codes() {
    let ok = plclab(&["--mode", "audit", "--criterion", "joint", "--messages", "3", "--support", "2", "--field", "3"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert_eq!(report(&ok)["report"]["pass"], true);
    // individual privacy does not hide the whole support
    let leak = plclab(&[
        "--mode", "audit", "--criterion", "joint", "--privacy", "individual", "--messages", "4", "--support", "2", "--field", "3",
    ]);
    assert_eq!(leak.status.code(), Some(2), "{}", String::from_utf8_lossy(&leak.stderr));
}

fn save(dir: &Path, name: &str, mode: &str, k: &str, d: &str, seed: u64) -> std::path::PathBuf {
    let path = dir.join(name);
    let out = plclab(&["--mode", mode, "--messages", k, "--support", d, "--seed", &seed.to_string(), "--transcript", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn replay(path: &Path) -> Output {
    plclab(&["--mode", "replay", "--transcript", path.to_str().unwrap()])
}

#[test]
fn transcript_round_trip_and_tamper() {
    let dir = tempfile::tempdir().unwrap();
    let path = save(dir.path(), "run.plct", "jplc", "3", "2", 4);
    let out = replay(&path);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["verified"], true);

    let mut bytes = std::fs::read(&path).unwrap();
    let at = bytes.windows(4).position(|w| w == b"ANSW").unwrap() + 12;
    // count of servers, length of the first answer list, then its first symbol
    let sym = at + 16;
    bytes[sym] = (bytes[sym] + 1) % 3;
    let tampered = dir.path().join("tampered.plct");
    std::fs::write(&tampered, &bytes).unwrap();
    assert_eq!(replay(&tampered).status.code(), Some(3));

    let truncated = dir.path().join("truncated.plct");
    std::fs::write(&truncated, &bytes[..bytes.len() / 2]).unwrap();
    assert_eq!(replay(&truncated).status.code(), Some(3));

    assert_eq!(replay(&dir.path().join("missing.plct")).status.code(), Some(1));

    let side = dir.path().join("side.plct");
    let out = plclab(&["--mode", "pir-psi", "--messages", "4", "--side-info", "1", "--transcript", side.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(replay(&side).status.code(), Some(0));
}

#[test]
fn random_transcripts_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [("jplc", "3", "2"), ("jplc", "4", "1"), ("iplc", "5", "2"), ("iplc", "4", "2"), ("jplc", "4", "3")];
    for seed in 0..50u64 {
        let (mode, k, d) = cases[seed as usize % cases.len()];
        let path = save(dir.path(), &format!("t{seed}.plct"), mode, k, d, seed);
        let out = replay(&path);
        assert_eq!(out.status.code(), Some(0), "seed {seed}: {}", String::from_utf8_lossy(&out.stdout));
    }
}
