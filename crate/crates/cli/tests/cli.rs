//! End-to-end checks of the `trcg` binary: byte-level determinism, output
//! shapes, and error paths.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn trcg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trcg"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("failed to launch the binary")
}

fn read(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join(file)).unwrap_or_else(|e| panic!("missing {file}: {e}"))
}

#[test]
fn tr_run_outputs_are_byte_identical_across_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    for sub in ["a", "b"] {
        let out = trcg(
            tmp.path(),
            &[
                "tr-run",
                "--param",
                "problem=sine-lsq:n=10",
                "--param",
                "grad-tol=1e-11",
                "--seed",
                "5",
                "--out",
                sub,
            ],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(read(&a, "tr_run.csv"), read(&b, "tr_run.csv"));
    assert_eq!(
        read(&a, "condition_report.json"),
        read(&b, "condition_report.json")
    );
    let json: serde_json::Value =
        serde_json::from_str(&read(&a, "condition_report.json")).unwrap();
    let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(
        keys,
        ["c0_min", "c1_max_tail", "c2_max_tail", "order_estimate"]
    );
}

#[test]
fn tr_run_rejects_unknown_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let out = trcg(tmp.path(), &["tr-run", "--param", "bogus=1"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bogus"), "stderr was: {stderr}");
}

#[test]
fn cg_dynamics_traces_coincide_without_a_tail() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("head_only.csv"),
        "lambda,weight,part\n2.0,1.0,head\n1.0,0.5,head\n",
    )
    .unwrap();
    let out = trcg(
        tmp.path(),
        &["cg-dynamics", "--param", "measure=head_only.csv", "--out", "d"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let traces = read(&tmp.path().join("d"), "cg_traces.csv");
    for line in traces.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 5);
        let full_v: f64 = cols[1].parse().unwrap();
        let head_v: f64 = cols[3].parse().unwrap();
        let full_r: f64 = cols[2].parse().unwrap();
        let head_r: f64 = cols[4].parse().unwrap();
        assert!((full_v - head_v).abs() <= 1e-10 * head_v.max(1.0));
        assert!((full_r - head_r).abs() <= 1e-10 * head_r.max(1.0));
    }
    // No tail, no coupling rows: the diagnostics file is header-only.
    let sigma = read(&tmp.path().join("d"), "sigma_diagnostics.csv");
    assert_eq!(sigma.lines().count(), 1);
}

#[test]
fn cg_dynamics_rejects_a_tail_overlapping_the_head() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("bad.csv"),
        "lambda,weight,part\n1.0,1.0,head\n2.0,0.1,tail\n",
    )
    .unwrap();
    let out = trcg(tmp.path(), &["cg-dynamics", "--param", "measure=bad.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sigma_check_passes_on_the_default_and_randomized_instances() {
    let tmp = tempfile::tempdir().unwrap();
    let out = trcg(tmp.path(), &["sigma-check", "--out", "fixed"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fixed = read(&tmp.path().join("fixed"), "sigma_check.csv");
    assert!(fixed.lines().count() > 10); // header + one row per order

    let out = trcg(
        tmp.path(),
        &["sigma-check", "--param", "random=10", "--seed", "3", "--out", "rand"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rand = read(&tmp.path().join("rand"), "sigma_check.csv");
    assert!(rand.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn capture_from_the_solution_set_takes_no_steps() {
    let tmp = tempfile::tempdir().unwrap();
    let out = trcg(
        tmp.path(),
        &[
            "capture",
            "--param",
            "problem=sine-lsq:n=5",
            "--param",
            "distance=0",
            "--param",
            "trials=5",
            "--out",
            "c",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&tmp.path().join("c"), "capture.csv");
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], "true", "trial did not converge: {line}");
        assert_eq!(cols[7], "0", "steps were taken from the solution set: {line}");
        rows += 1;
    }
    assert_eq!(rows, 5);
}

#[test]
fn remark_asymptotics_is_deterministic_and_flags_nothing_by_default() {
    let tmp = tempfile::tempdir().unwrap();
    for sub in ["a", "b"] {
        let out = trcg(tmp.path(), &["remark-asymptotics", "--out", sub]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = read(&tmp.path().join("a"), "remark_asymptotics.csv");
    let b = read(&tmp.path().join("b"), "remark_asymptotics.csv");
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 5);
    assert!(a.lines().skip(1).all(|l| l.ends_with(",true")));
}
