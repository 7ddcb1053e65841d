//! End-to-end checks of the `jumpdiff` binary: run, plotdata, verify, error
//! handling, and the reproducibility contract of verification mode.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_jumpdiff"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("jumpdiff-cli-{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_degenerate(out: &Path, extra: &[&str]) -> Output {
    bin()
        .args([
            "run",
            "--preset",
            "custom",
            "--estimator",
            "mc",
            "--discretization",
            "uniform",
            "--lmax",
            "0",
            "--ref",
            "2",
            "--reps",
            "3",
            "--seed",
            "11",
            "--threads",
            "1",
            "--out",
        ])
        .arg(out)
        .args(["gaussian=off", "jump-dist=constant", "jump-value=0"])
        .args(extra)
        .output()
        .unwrap()
}

#[test]
fn run_writes_reproducible_csv_and_plotdata() {
    let dir = temp_dir("run");
    let out = run_degenerate(&dir, &[]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(stdout.contains("fitted slope: n/a"), "stdout: {stdout}");

    let csv = dir.join("custom_mc_uniform_L0_s11.csv");
    let manifest = dir.join("custom_mc_uniform_L0_s11.manifest.txt");
    let first = std::fs::read(&csv).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert!(text.starts_with(
        "preset,estimator,discretization,L,inv_h,rmse,wall_time_s,M_levels,N_levels,eps_levels,slope_so_far\n"
    ));
    assert_eq!(text.lines().count(), 2);
    assert!(std::fs::read_to_string(&manifest).unwrap().contains("config-hash="));

    // Bit-stable verification mode: identical bytes on rerun.
    assert!(run_degenerate(&dir, &[]).status.success());
    assert_eq!(std::fs::read(&csv).unwrap(), first);

    let out = bin().arg("plotdata").arg(&csv).output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let rmse = std::fs::read_to_string(dir.join("custom_mc_uniform_L0_s11_rmse.dat")).unwrap();
    assert_eq!(rmse.lines().count(), 1);
    let time = std::fs::read_to_string(dir.join("custom_mc_uniform_L0_s11_time.dat")).unwrap();
    assert!(time.starts_with("0 "), "threads=1 zeroes wall times: {time}");
}

#[test]
fn env_var_sets_output_directory() {
    let dir = temp_dir("env");
    let out = bin()
        .env("JUMPDIFF_OUT", &dir)
        .args([
            "run",
            "--preset",
            "custom",
            "--estimator",
            "mc",
            "--discretization",
            "uniform",
            "--lmax",
            "0",
            "--ref",
            "2",
            "--reps",
            "3",
            "--seed",
            "4",
            "--threads",
            "1",
            "gaussian=off",
            "jump-dist=constant",
            "jump-value=0",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("custom_mc_uniform_L0_s4.csv").exists());
}

#[test]
fn rerun_from_manifest_reproduces_csv() {
    let dir = temp_dir("manifest");
    assert!(run_degenerate(&dir, &[]).status.success());
    let csv = dir.join("custom_mc_uniform_L0_s11.csv");
    let manifest = dir.join("custom_mc_uniform_L0_s11.manifest.txt");
    let original = std::fs::read(&csv).unwrap();

    let again = temp_dir("manifest-again");
    let config_arg = format!("config={}", manifest.display());
    let out = run_degenerate(&again, &[&config_arg]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(again.join("custom_mc_uniform_L0_s11.csv")).unwrap(), original);
}

#[test]
fn invalid_inputs_exit_nonzero_with_offending_key() {
    let out = bin()
        .args([
            "run", "--preset", "no-such", "--estimator", "mc", "--discretization", "uniform",
            "--lmax", "0", "--ref", "2", "--reps", "3", "--seed", "1",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such"));

    let dir = temp_dir("badkey");
    let out = run_degenerate(&dir, &["frobnicate=1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("frobnicate"));

    let out = bin().args(["verify", "--suite", "everything"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("everything"));

    let out = bin().arg("plotdata").arg("/nonexistent/results.csv").output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn verify_unit_suite_succeeds() {
    let out = bin().args(["verify", "--suite", "unit"]).output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(stdout.contains("all 5 checks passed"), "stdout: {stdout}");
}
