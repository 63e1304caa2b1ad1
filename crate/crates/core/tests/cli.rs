use std::path::{Path, PathBuf};
use std::process::Command;

use kk_core::cli::{main_with_args, run_file, Scenario, Summary, EXIT_INVALID, EXIT_NUMERIC, EXIT_OK};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"))
}

fn summary(dir: &Path, stem: &str) -> Summary {
    let text = std::fs::read_to_string(dir.join(format!("{stem}.summary.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn artifacts(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .map(|r| r.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect())
        .unwrap_or_default();
    v.sort();
    v
}

#[test]
fn every_shipped_scenario_parses_and_validates() {
    for entry in std::fs::read_dir(scenario("x").parent().unwrap()).unwrap() {
        let path = entry.unwrap().path();
        let s: Scenario = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        let valid = s.validate().is_ok();
        let bad = path.file_stem().unwrap().to_string_lossy().starts_with("bad_");
        assert_eq!(valid, !bad, "{}", path.display());
    }
}

#[test]
fn verify_complex_passes() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(run_file(&scenario("verify_hopf_complex"), out.path(), Some(2), false), EXIT_OK);
    let s = summary(out.path(), "verify_hopf_complex");
    assert_eq!(s.command, "verify");
    assert_eq!(s.status, "ok");
    assert_eq!(artifacts(out.path()), ["verify_hopf_complex.csv", "verify_hopf_complex.summary.json"]);
}

#[test]
fn verify_quaternionic_reports_failed_checks() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(run_file(&scenario("verify_hopf_quaternionic"), out.path(), None, false), EXIT_NUMERIC);
    let s = summary(out.path(), "verify_hopf_quaternionic");
    assert_eq!(s.status, "check_failed");
    assert!(out.path().join("verify_hopf_quaternionic.csv").exists());
}

#[test]
fn negative_step_is_rejected_without_artifacts() {
    let out = tempfile::tempdir().unwrap();
    let dir = out.path().join("never");
    assert_eq!(run_file(&scenario("bad_negative_step"), &dir, None, true), EXIT_INVALID);
    assert!(!dir.exists());
}

#[test]
fn unknown_fields_and_malformed_json_are_invalid() {
    let out = tempfile::tempdir().unwrap();
    let cases = [
        ("extra.json", r#"{"command":"verify","model":{"name":"hopf_complex"},"points":10,"seed":1,"colour":"red"}"#),
        ("extra_model.json", r#"{"command":"verify","model":{"name":"hopf_complex","twist":2},"points":10,"seed":1}"#),
        ("broken.json", r#"{"command":"verify","#),
        ("unknown.json", r#"{"command":"launch","model":{"name":"hopf_complex"}}"#),
    ];
    for (name, body) in cases {
        let path = out.path().join(name);
        std::fs::write(&path, body).unwrap();
        let dest = out.path().join("artifacts");
        assert_eq!(run_file(&path, &dest, None, false), EXIT_INVALID, "{name}");
        assert!(!dest.exists());
    }
    assert_eq!(run_file(&out.path().join("missing.json"), out.path(), None, false), EXIT_INVALID);
    assert_eq!(run_file(&scenario("integrate_larmor"), out.path(), Some(0), false), EXIT_INVALID);
}

#[test]
fn sweep_finds_the_zero_and_writes_a_plot() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(run_file(&scenario("sweep_clifford"), out.path(), None, true), EXIT_OK);
    let csv = std::fs::read_to_string(out.path().join("sweep_clifford.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "alpha,charge_norm,axial_charge");
    let s = summary(out.path(), "sweep_clifford");
    assert_eq!(s.metrics["zeros"], 1.0);
    assert!(s.metrics["zero_offset_from_quarter_pi"].abs() < 1e-6);
    let gp = std::fs::read_to_string(out.path().join("sweep_clifford.gp")).unwrap();
    assert!(gp.contains("'sweep_clifford.csv'"));
}

#[test]
fn integrate_writes_the_trajectory() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(run_file(&scenario("integrate_larmor"), out.path(), None, false), EXIT_OK);
    let csv = std::fs::read_to_string(out.path().join("integrate_larmor.csv")).unwrap();
    assert!(csv.starts_with("t,x1,x2,u1,u2,v1,energy,k1\n"));
    let s = summary(out.path(), "integrate_larmor");
    assert!(s.metrics["energy_drift"] < 1e-8);
    assert!(s.metrics["charge_drift"] < 1e-10);
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    for name in ["verify_hopf_complex", "sweep_clifford", "integrate_su2", "tension_clifford"] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ca = run_file(&scenario(name), a.path(), Some(1), true);
        let cb = run_file(&scenario(name), b.path(), Some(4), true);
        assert_eq!(ca, cb);
        let files = artifacts(a.path());
        assert_eq!(files, artifacts(b.path()));
        for f in files {
            let x = std::fs::read(a.path().join(&f)).unwrap();
            let y = std::fs::read(b.path().join(&f)).unwrap();
            assert!(x == y, "{name}: {f} differs");
        }
    }
}

#[test]
fn argument_parsing() {
    assert_eq!(main_with_args(["kkrun"]), EXIT_INVALID);
    assert_eq!(main_with_args(["kkrun", "frobnicate"]), EXIT_INVALID);
    assert_eq!(main_with_args(["kkrun", "--help"]), EXIT_OK);
    let out = tempfile::tempdir().unwrap();
    let s = scenario("integrate_larmor");
    let code = main_with_args(["kkrun", "run", s.to_str().unwrap(), "--out", out.path().to_str().unwrap(), "--threads", "2", "--emit-plot"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.path().join("integrate_larmor.gp").exists());
}

#[test]
fn binary_exit_codes() {
    let out = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        Command::new(env!("CARGO_BIN_EXE_kkrun"))
            .args(["run", scenario(name).to_str().unwrap(), "--out"])
            .arg(out.path())
            .output()
            .unwrap()
    };
    assert_eq!(run("verify_hopf_complex").status.code(), Some(EXIT_OK));
    let bad = run("bad_negative_step");
    assert_eq!(bad.status.code(), Some(EXIT_INVALID));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("error"));
    assert_eq!(run("verify_hopf_quaternionic").status.code(), Some(EXIT_NUMERIC));
}
