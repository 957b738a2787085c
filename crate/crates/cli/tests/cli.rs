use std::path::PathBuf;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_socp-phase")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("socp-phase-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn fundamental_prints_curve() {
    let out = run(&["fundamental", "--points", "3"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "alpha_w,beta_w");
    assert_eq!(lines.len(), 4);
}

#[test]
fn predict_header_and_rows() {
    let out = run(&["predict", "--xmag-grid", "0.5:1.5:0.5"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x_mag_sc,theta1,theta2,theta3,E_nu,E_w_over_sigma,E_xi_per_sqrt_n,residual");
    assert_eq!(lines.count(), 3);
}

#[test]
fn signed_breaking_point() {
    let out = run(&["feasibility", "--alpha", "0.7", "--rho", "3"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|f| f.parse().unwrap()).collect();
    assert!((row[4] - 1.708130).abs() < 1e-5, "{row:?}");
}

#[test]
fn flags_override_config() {
    let cfg = scratch("override.cfg");
    std::fs::write(&cfg, "# design\nalpha = 0.7\nrho=3\n").unwrap();
    let from_file = stdout(&run(&["feasibility", "--config", cfg.to_str().unwrap()]));
    let flagged = stdout(&run(&["feasibility", "--config", cfg.to_str().unwrap(), "--rho", "2"]));
    let field = |s: &str, i: usize| s.lines().nth(1).unwrap().split(',').nth(i).unwrap().parse::<f64>().unwrap();
    assert_eq!(field(&from_file, 1), 3.0);
    assert_eq!(field(&flagged, 1), 2.0);
    assert_eq!(field(&flagged, 0), 0.7);
}

#[test]
fn unknown_config_key_is_an_error() {
    let cfg = scratch("bad.cfg");
    std::fs::write(&cfg, "alpha=0.5\nwidth=3\n").unwrap();
    let out = run(&["predict", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("width"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["predict", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&["predict", "--alpha", "1.5"]).status.code(), Some(1));
    assert_eq!(run(&["predict", "--xmag-grid", "3:1:0.5"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn surrogate_writes_file_and_records() {
    let out_path = scratch("surrogate.csv");
    let out = run(&["surrogate", "--n", "200", "--trials", "3", "--xmag-grid", "1", "--seed", "7", "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x_mag_sc,trial,xi_per_sqrt_n,w_over_sigma,nu,c1,c2,c3,status");
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn simulate_is_reproducible() {
    let records = scratch("records.csv");
    let args = ["simulate", "--n", "60", "--trials", "2", "--xmag-grid", "1", "--seed", "3", "--records", records.to_str().unwrap()];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("x_mag_sc,source,mean_w_over_sigma"));
    assert_eq!(std::fs::read_to_string(&records).unwrap().lines().count(), 3);
}
