use std::path::Path;
use std::process::{Command, Output};

use masm_core::experiment::RunDump;

const SMALL: &str = r#"{
  "ber": {"min_bits": 2000, "max_bits": 2000, "target_errors": 10},
  "sweep": {"converge_paths": [4], "converge_orders": [4]}
}"#;

fn masm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_masm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.json");
    std::fs::write(&p, SMALL).unwrap();
    p.display().to_string()
}

#[test]
fn converge_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let log = dir.path().join("a.jsonl");
    for (out, extra) in [(&a, vec!["--log", log.to_str().unwrap()]), (&b, vec![])] {
        let mut args = vec!["converge", "--config", &cfg, "--seeds", "3", "--out", out.to_str().unwrap()];
        args.extend(extra);
        let o = masm(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert!(text.contains("# config_hash: "));
    assert!(text.contains("# seeds: 3\n"));

    let mut last = f64::NEG_INFINITY;
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let eta: f64 = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!(eta >= last - 1e-9);
        last = eta;
    }
    let jsonl = std::fs::read_to_string(&log).unwrap();
    let first: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
    assert_eq!(first["n"], 0);
    assert!(first["eta"].as_f64().unwrap() > 0.0);
}

#[test]
fn ber_vs_snr_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = masm(&["ber-vs-snr", "--config", &cfg, "--seeds", "0,1", "--schemes", "fpa,gas", "--snr", "4,8", "--workers", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "scheme,snr_db,L,M,ber,std_error,bit_errors,total_bits,channels,mean_eta");
    assert_eq!(rows.len(), 1 + 4);
    assert!(rows[1].starts_with("fpa,4,8,4,"));
}

#[test]
fn paths_point_matches_snr_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = masm(&["ber-vs-snr", "--config", &cfg, "--seeds", "0..2", "--schemes", "ma", "--snr", "12"]);
    let b = masm(&["ber-vs-paths", "--config", &cfg, "--seeds", "0..2", "--schemes", "ma", "--paths", "8", "--snr", "12"]);
    let data = |o: &Output| {
        String::from_utf8_lossy(&o.stdout)
            .lines()
            .filter(|l| !l.starts_with('#'))
            .nth(1)
            .unwrap()
            .to_string()
    };
    assert_eq!(data(&a), data(&b));
}

#[test]
fn unknown_scheme_is_usage_error() {
    let o = masm(&["ber-vs-snr", "--schemes", "ma,mimo", "--seeds", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown scheme 'mimo'"));
}

#[test]
fn bad_config_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{\n  \"system\": {\"tx_antennas\": 3}\n}\n").unwrap();
    let o = masm(&["converge", "--config", p.to_str().unwrap(), "--seeds", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("tx_antennas"), "{err}");

    std::fs::write(&p, "{\n  \"system\": {\"wavelenght\": 0.05}\n}\n").unwrap();
    let o = masm(&["converge", "--config", p.to_str().unwrap(), "--seeds", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn missing_config_is_io_error() {
    let o = masm(&["converge", "--config", "/nonexistent/masm.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/masm.json"));
}

#[test]
fn single_run_dump_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dump.json");
    let o = masm(&["single-run", "--seed", "7", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let d = RunDump::load(&out).unwrap();
    assert_eq!(d.seed, 7);
    assert!((d.reevaluate().unwrap() - d.d_min).abs() <= 1e-12 * d.d_min);
    d.layout.validate(&d.system).unwrap();
}
