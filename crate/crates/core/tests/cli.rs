use std::path::Path;
use std::process::{Command, Output};

use trio_ion::harness::{self, ConfigFile, RunConfig, OUT_DIR_ENV};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_trio-ion"));
    cmd.env_remove(OUT_DIR_ENV);
    cmd
}

fn run_with_config(dir: &Path, toml: &str, args: &[&str]) -> Output {
    let path = dir.join("run.toml");
    std::fs::write(&path, toml).unwrap();
    bin().arg("--config").arg(&path).args(args).output().unwrap()
}

#[test]
fn coeffs_to_stdout() {
    let out = bin().args(["coeffs", "--no-timestamp"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(!text.contains("generated_unix"));
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data[0], "n,re_c,im_c,abs2_c");
    assert_eq!(data.len(), 12);
    assert!(data[1].starts_with("0,8.549244889172"));
    let stamped = bin().arg("coeffs").output().unwrap();
    assert!(String::from_utf8(stamped.stdout).unwrap().contains("# generated_unix: "));
}

#[test]
fn header_reproduces_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with_config(
        dir.path(),
        "[run]\nalpha = 0.05\nn_max = 6\nk = 1\ntau_end = 20.0\nrecord_stride = 200\n",
        &["simulate", "--no-timestamp", "--engine", "both", "--seed", "9", "--out", "-"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = RunConfig::from_file(ConfigFile::from_header(&text).unwrap()).unwrap();
    assert_eq!(cfg.run().master_seed, 9);
    let again = harness::cmd_simulate(&cfg).unwrap().to_csv(None);
    assert_eq!(again, text);
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.starts_with("tau,sigma_z,fidelity,P_2_3_0,"));
    assert!(header.contains(",mcwf_fidelity,mcwf_fidelity_se,"));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().env(OUT_DIR_ENV, dir.path()).args(["coeffs", "--no-timestamp"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(dir.path().join("coeffs.csv")).unwrap();
    assert!(text.contains("# command: coeffs"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for (toml, args) in [
        ("[run]\nalfa = 0.1\n", vec!["coeffs"]),
        ("[run]\nalpha = -0.1\n", vec!["coeffs"]),
        ("[run]\nalphas = []\n", vec!["fidelity"]),
        ("", vec!["coeffs", "--engine", "warp"]),
    ] {
        let out = run_with_config(dir.path(), toml, &args);
        assert_eq!(out.status.code(), Some(2), "{toml:?} {args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    }
    let missing = bin().args(["--config", "/nonexistent/run.toml", "coeffs"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn instability_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with_config(dir.path(), "[run]\nalpha = 40.0\nd_tau = 0.1\ntau_end = 50.0\n", &["simulate"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = run_with_config(dir.path(), "[run]\ntau_end = 50.0\n", &["verify"]);
    let report = String::from_utf8(ok.stdout).unwrap();
    assert_eq!(ok.status.code(), Some(0), "{report}");
    assert!(report.contains("[PASS] trilinear reduction (+,-,-,+) [default]"));
    // a cutoff far too small for |ξ| = 40 leaves a large eigen-residual
    let bad = run_with_config(dir.path(), "[run]\nxi_re = 40.0\nn_max = 4\nk = 0\ntau_end = 5.0\n", &["verify"]);
    let report = String::from_utf8(bad.stdout).unwrap();
    assert_eq!(bad.status.code(), Some(1), "{report}");
    assert!(report.contains("[FAIL] eigenrelations"));
}

#[test]
fn sweep_reports_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with_config(
        dir.path(),
        "[run]\nn_max = 6\nk = 1\nrecord_stride = 500\n",
        &["sweep-alpha", "--alphas", "0.05,0.08", "--no-timestamp"],
    );
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "alpha,tau_s,status,max_fidelity");
    let tau: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(rows[1..].iter().all(|r| r.contains(",ok,")));
    assert!(tau[1] < tau[0]);
}
