//! End-to-end checks of the command-line binary: artifacts, exit codes,
//! error messages, and byte-level determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_fbsde-hjb");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn write_utility_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    let out = dir.join("out");
    let body = format!(
        r#"
[builtin]
name = "utility"

[grid]
x_lo = -2.0
x_hi = 4.0
nx = 41
nt = 200

[mc]
paths = 2000
steps = 32
seed = 11

[solver]
tol = 1e-6
max_iter = 30
candidates = 21

[output]
dir = "{}"
{extra}
"#,
        out.display()
    );
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn solve_writes_artifacts_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_utility_config(dir.path(), "");
    let out = run(&["--config", cfg.to_str().unwrap(), "solve"]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in [
        "v.csv",
        "g.csv",
        "z.csv",
        "u_star.csv",
        "report.txt",
        "config.echo.toml",
    ] {
        assert!(
            dir.path().join("out").join(name).is_file(),
            "missing artifact {name}"
        );
    }
}

#[test]
fn solve_artifacts_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_utility_config(dir.path(), "");
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out_dir in [&out_a, &out_b] {
        let out = run(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
            "solve",
        ]);
        assert!(out.status.success());
    }
    for name in ["v.csv", "g.csv", "z.csv", "u_star.csv"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "artifact {name} differs between identical runs");
    }
}

#[test]
fn simulate_summary_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_utility_config(dir.path(), "");
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out_dir in [&out_a, &out_b] {
        let out = run(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
            "simulate",
        ]);
        assert!(
            out.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let a = fs::read(out_a.join("summary.csv")).unwrap();
    let b = fs::read(out_b.join("summary.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn tiny_grid_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_utility_config(dir.path(), "");
    let text = fs::read_to_string(&cfg).unwrap().replace("nx = 41", "nx = 2");
    fs::write(&cfg, text).unwrap();
    let out = run(&["--config", cfg.to_str().unwrap(), "solve"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("grid too small"),
        "stderr was: {stderr}"
    );
}

#[test]
fn zero_iterations_or_paths_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_utility_config(dir.path(), "");
    let original = fs::read_to_string(&cfg).unwrap();

    fs::write(&cfg, original.replace("max_iter = 30", "max_iter = 0")).unwrap();
    let out = run(&["--config", cfg.to_str().unwrap(), "solve"]);
    assert_eq!(out.status.code(), Some(1));

    fs::write(&cfg, original.replace("paths = 2000", "paths = 0")).unwrap();
    let out = run(&["--config", cfg.to_str().unwrap(), "simulate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_config_is_a_usage_error() {
    let out = run(&["solve"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_without_artifacts_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_utility_config(dir.path(), "");
    let out = run(&["--config", cfg.to_str().unwrap(), "verify", "--no-solve"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_passes_on_the_builtin_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_utility_config(dir.path(), "");
    let out = run(&["--config", cfg.to_str().unwrap(), "verify"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        out.status.success(),
        "stdout: {stdout}\nstderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(stdout.matches("[PASS]").count(), 4, "stdout: {stdout}");
    assert!(dir.path().join("out").join("verify_report.txt").is_file());
}

#[test]
fn bench_viscosity_needs_no_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "--out-dir",
        dir.path().to_str().unwrap(),
        "bench",
        "viscosity",
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = fs::read_to_string(dir.path().join("viscosity_report.txt")).unwrap();
    assert!(report.contains("-2"));
    assert!(report.contains("2"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_utility_config(dir.path(), "\n[nonsense]\nfoo = 1\n");
    let out = run(&["--config", cfg.to_str().unwrap(), "solve"]);
    assert_eq!(out.status.code(), Some(1));
}
