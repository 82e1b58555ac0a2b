use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recurrence")).args(args).output().expect("binary runs")
}

fn canonical_file(dir: &Path) -> String {
    let path = dir.join("m.txt");
    std::fs::write(&path, "0.5\n0.2\n0.1\n0.1\n0.1\n").unwrap();
    format!("discrete:file={}", path.display())
}

#[test]
fn classify_log_tail_is_null_recurrent() {
    let out = run(&["classify", "--model", "log-tail:c=0.5"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "null-recurrent");
    let out = run(&["classify", "--model", "pareto:alpha=2,scale=1"]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "positive-recurrent");
}

#[test]
fn exact_tail_csv_for_canonical_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = canonical_file(dir.path());
    let csv = dir.path().join("v.csv");
    let out = run(&["exact-tail", "--model", &model, "--x0", "0.5", "--nmax", "100", "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,v_n"));
    let v: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(v.len(), 101);
    assert_eq!(v[0], 1.0);
    assert!((v[1] - 0.5).abs() < 1e-14);
    assert!((v[2] - 0.40).abs() < 1e-14);
}

#[test]
fn expected_t_matches_hand_value() {
    let dir = tempfile::tempdir().unwrap();
    let model = canonical_file(dir.path());
    let out = run(&["expected-t", "--model", &model, "--x0", "0.5", "--start", "1.2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let value: f64 = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((value - 3.968254).abs() < 1e-6);
}

#[test]
fn help_exits_zero_everywhere() {
    for sub in ["simulate", "exact-tail", "harmonic", "expected-t", "zlaw", "classify", "verify"] {
        let out = run(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        let text = String::from_utf8(out.stdout).unwrap();
        for flag in ["--model", "--x0", "--A", "--start", "--nmax", "--ngrid", "--reps", "--seed", "--threads", "--out", "--json", "--tol"] {
            assert!(text.contains(flag), "{sub} --help lacks {flag}");
        }
    }
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    let out = run(&["classify", "--model", "log-tail:c=0.5", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    assert_eq!(run(&["classify", "--model", "gauss:mu=0"]).status.code(), Some(1));
    // Seeds are never implicit.
    let out = run(&["simulate", "--model", "log-tail:c=0.5", "--x0", "1", "--start", "1.5", "--ngrid", "10", "--reps", "100"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(run(&["verify", "thm5"]).status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_two() {
    // Expected recurrence time of a null-recurrent chain is infinite.
    let out = run(&[
        "expected-t", "--model", "log-tail:c=0.5", "--x0", "1", "--start", "1.5", "--reps", "1000", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_exit_codes_follow_verdict() {
    let out = run(&["verify", "thm2", "--model", "log-tail:c=0.5", "--x0", "1", "--ngrid", "100,1000,10000"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    // A tolerance no finite n can meet forces a failing row.
    let out = run(&["verify", "thm2", "--ngrid", "100,1000,10000", "--tol", "1e-9"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let model = canonical_file(dir.path());
    let mut outputs = vec![];
    for threads in ["1", "4"] {
        let csv = dir.path().join(format!("sim{threads}.csv"));
        let json = dir.path().join(format!("sim{threads}.json"));
        let out = run(&[
            "simulate", "--model", &model, "--x0", "0.5", "--start", "1.2", "--ngrid", "1,2,5,10", "--reps", "20000",
            "--seed", "42", "--threads", threads, "--out", csv.to_str().unwrap(), "--json", json.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        outputs.push((std::fs::read(&csv).unwrap(), std::fs::read(&json).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);

    let mut verify = vec![];
    for threads in ["1", "3"] {
        let out = run(&["verify", "sandwich", "--seed", "7", "--reps", "5000", "--threads", threads]);
        verify.push(out.stdout);
    }
    assert_eq!(verify[0], verify[1]);
}
