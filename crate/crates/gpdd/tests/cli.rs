use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gpdd(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gpdd"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("GPDD_THREADS", t);
    }
    cmd.output().expect("run gpdd")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gpdd-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn optimal_values_and_exit_codes() {
    let out = gpdd(&["optimal", "gamma", "--kernel", "linear", "--c", "1", "--mu", "1"], None);
    assert!(out.status.success());
    let g: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((g - 0.6180339887).abs() < 1e-9);

    let out = gpdd(&["optimal", "lambda", "--kernel", "linear", "--c", "1", "--gamma", "0.5"], None);
    let l: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((l - 8.0 / 3.0).abs() < 1e-12);

    // no optimal λ is a numerical failure
    let out = gpdd(&["optimal", "lambda", "--kernel", "linear", "--c", "1", "--gamma", "1.2"], None);
    assert_eq!(out.status.code(), Some(3));
    // usage errors
    assert_eq!(gpdd(&["optimal", "lambda", "--kernel", "nope", "--c", "1", "--gamma", "0.5"], None).status.code(), Some(2));
    assert_eq!(gpdd(&["cvcheck", "--n", "7", "--kernel", "linear", "--seed", "1"], None).status.code(), Some(2));
}

#[test]
fn validate_suites() {
    for suite in ["specfun", "rmt", "gp", "data"] {
        let out = gpdd(&["validate", "--suite", suite], None);
        assert!(out.status.success(), "{suite}: {}", String::from_utf8_lossy(&out.stdout));
    }
    let out = gpdd(&["validate", "--suite", "rmt"], None);
    assert!(String::from_utf8_lossy(&out.stdout).contains("gamma* adjudication"));
}

#[test]
fn cvcheck_decomposition() {
    let out = gpdd(&["cvcheck", "--n", "5", "--kernel", "gaussian", "--seed", "3"], None);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("sum S_k"));
}

#[test]
fn sweep_writes_csv_and_svg() {
    let dir = scratch("sweep");
    let cfg = dir.join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"name": "t", "kernel": {"family": "linear"}, "metric": "free-energy", "n": 40,
            "d_grid": [10, 20, 40], "gamma": [0.1, 1.5], "lambda_policy": "optimal",
            "reps": 5, "seed": 1, "data": {"synthetic": {}}}"#,
    )
    .unwrap();
    let (csv, svg) = (dir.join("o.csv"), dir.join("o.svg"));
    let out = gpdd(&["sweep", "--config", s(&cfg), "--out", s(&csv), "--plot", s(&svg)], Some("2"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "metric,kernel,n,d,c,gamma,lambda,reps,mean,ci_half_width,seed,error");
    assert_eq!(lines.len(), 1 + 6);
    // γ = 1.5 rows carry an error marker and empty numbers
    assert!(lines.iter().filter(|l| l.contains(",1.5000000000000000e0,")).all(|l| l.contains(",,") && l.contains("no optimal lambda")));
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<polyline"));

    // unknown config keys are usage errors
    std::fs::write(&cfg, r#"{"name": "t", "bogus": 1}"#).unwrap();
    assert_eq!(gpdd(&["sweep", "--config", s(&cfg), "--out", s(&csv)], None).status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn whiten_and_augment_roundtrip() {
    let dir = scratch("csv");
    let input = dir.join("in.csv");
    let mut text = String::from("a,b,dup,y\n");
    for i in 0..50 {
        let (a, b) = ((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos() + 0.2 * i as f64);
        text.push_str(&format!("{a},{b},{},{}\n", 2.0 * a, a + b));
    }
    std::fs::write(&input, text).unwrap();
    let white = dir.join("w.csv");
    let out = gpdd(&["whiten", "--input", s(&input), "--label", "y", "--output", s(&white)], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let header = std::fs::read_to_string(&white).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "a,b,y");

    let aug = dir.join("a.csv");
    let out = gpdd(
        &["augment", "--input", s(&white), "--mode", "copied", "--target-d", "5", "--seed", "1", "--output", s(&aug)],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<Vec<String>> = std::fs::read_to_string(&aug)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(rows[0].len(), 6);
    assert_eq!(rows[1][0], rows[1][2]);

    let out = gpdd(&["whiten", "--input", s(&input), "--label", "missing", "--output", s(&white)], None);
    assert_eq!(out.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(&dir);
}
