use std::process::Command;

use bsde_bench::cli::run;
use bsde_bench::read_csv;

fn run_capture(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["bsde-bench"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn converge_writes_one_row_per_n() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let (code, out, _) = run_capture(&[
        "converge", "--problem", "logistic", "--scheme", "milne", "--n", "8,16,32,64",
        "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("fitted order"));
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 5);
    let rows = read_csv(text.as_bytes()).unwrap();
    assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![8, 16, 32, 64]);
}

#[test]
fn identical_flags_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let bytes = |name: &str| {
        let path = dir.path().join(name);
        let (code, _, _) = run_capture(&[
            "converge", "--scheme", "amb", "--r", "3", "--n", "8,16,32",
            "--out", path.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        std::fs::read(path).unwrap()
    };
    assert_eq!(bytes("a.csv"), bytes("b.csv"));
}

#[test]
fn verify_scheme_reports_milne() {
    let (code, out, _) = run_capture(&["verify-scheme", "--scheme", "milne"]);
    assert_eq!(code, 0);
    assert!(out.contains("classified order: 4"));
    assert!(out.contains("Hc: pass"));
    assert!(out.contains("root condition: pass"));
    assert!(out.contains("b_1 = 2.6666666666666665e0"));
}

#[test]
fn verify_scheme_flags_counterexample() {
    let (code, out, _) = run_capture(&["verify-scheme", "--scheme", "unstable2"]);
    assert_eq!(code, 0);
    assert!(out.contains("Hc: fail"));
    assert!(out.contains("root condition: fail"));
}

#[test]
fn stability_of_counterexample_is_growing() {
    let (code, out, _) = run_capture(&["stability", "--scheme", "unstable2", "--n", "16,32,64"]);
    assert_eq!(code, 0);
    assert!(out.contains("verdict: growing"), "{out}");
}

#[test]
fn moment_study_writes_one_file_per_k() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ms.csv");
    let (code, out, _) = run_capture(&[
        "moment-study", "--scheme", "crank_nicolson", "--K", "3,5", "--n", "8,16",
        "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("K = 3") && out.contains("K = 5"));
    assert!(dir.path().join("ms_K3.csv").exists());
    assert!(dir.path().join("ms_K5.csv").exists());
}

#[test]
fn truncation_prints_slopes() {
    let (code, out, _) = run_capture(&["truncation", "--scheme", "implicit_euler", "--n", "16,32,64"]);
    assert_eq!(code, 0);
    assert!(out.contains("fitted slope: eta 2."), "{out}");
    assert!(out.contains("n,h,eta_y,eta_z"));
}

#[test]
fn usage_errors_exit_with_2() {
    for args in [
        vec!["converge", "--scheme", "milne", "--bogus"],
        vec!["converge"],
        vec!["teleport"],
        vec!["converge", "--scheme", "milne", "--n", "eight"],
        vec!["converge", "--scheme", "milne", "--K", "4"],
        vec!["converge", "--scheme", "milne", "--n", "16,8"],
        vec!["converge", "--scheme", "milne", "--format", "json"],
    ] {
        let (code, _, err) = run_capture(&args);
        assert_eq!(code, 2, "{args:?}: {err}");
        assert!(!err.is_empty());
    }
}

#[test]
fn unknown_scheme_is_an_error() {
    let (code, _, err) = run_capture(&["converge", "--scheme", "rk4"]);
    assert_ne!(code, 0);
    assert!(err.contains("unknown scheme"));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_bsde-bench");
    let status = Command::new(bin).args(["converge", "--nope"]).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    let ok = Command::new(bin).args(["verify-scheme", "--scheme", "amb", "--r", "4"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("classified order: 5"));
}
