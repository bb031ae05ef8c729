//! End-to-end checks of the command-line harness.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_options-em"))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.txt");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn unknown_subcommand_fails() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn missing_config_file_reports_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["simulate", "--config"])
        .arg(dir.path().join("nope.txt"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn simulate_is_deterministic_across_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[simulate]\nt = 50\nburn_in = 20\nn_paths = 2\nmaster_seed = 5\n",
    );
    for out_name in ["a", "b"] {
        let status = bin()
            .args(["simulate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(out_name))
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in ["path_0.csv", "path_1.csv"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
        assert!(a.starts_with(b"t,s,a,o,b\n"));
    }
}

#[test]
fn em_subcommand_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[em]\nt = 120\nburn_in = 50\nn_iters = 4\nmaster_seed = 2\n",
    );
    let out = bin()
        .args(["em", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let trace = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    assert!(trace.starts_with("n,theta_hi,theta_lo,theta_b,q_value,log_marginal\n"));
    assert_eq!(trace.lines().count(), 6);
}

#[test]
fn experiment_subcommand_writes_all_requested_legs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[experiment]\npreset = desk\nt_list = 60,90\nn_paths = 3\nn_iters = 3\nburn_in = 30\nmaster_seed = 8\n\n\
         [percentiles]\nintervals = 0:50,50:100\n\n[mu_sweep]\nmu_values = 0.2,0.8\n\n[random_init]\nw_values = 0.1,0.2\n",
    );
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["experiment", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in [
        "err.csv",
        "paths_T60.csv",
        "paths_T90.csv",
        "manifest.txt",
        "err_buckets_T60.csv",
        "err_buckets_T90.csv",
        "mu_sweep/err_mu_T60.csv",
        "mu_sweep/manifest.txt",
        "random_init/err_w_T90.csv",
    ] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
    let err = fs::read_to_string(out_dir.join("err.csv")).unwrap();
    assert!(err.starts_with("n,err_T60,err_T90\n"));
    assert_eq!(err.lines().count(), 5);
    let manifest = fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("config.master_seed = 8"));
    assert!(manifest.contains("file err.csv sha256="));
}

#[test]
fn oracle_check_subcommand_passes_on_small_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[oracle_check]\nn_instances = 6\nmaster_seed = 11\ntol = 1e-9\n",
    );
    let out = bin()
        .args(["oracle-check", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("oracle check: PASS"));
    assert!(dir.path().join("out/oracle_check.csv").exists());
}

#[test]
fn stability_subcommand_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[stability]\nt = 700\nburn_in = 100\ncore_start = 250\ncore_len = 40\nk_list = 1,10,100\nmaster_seed = 4\n",
    );
    let out = bin()
        .args(["stability", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let forgetting = fs::read_to_string(dir.path().join("out/forgetting.csv")).unwrap();
    assert!(forgetting.starts_with("k,measured,bound\n"));
    assert_eq!(forgetting.lines().count(), 4);
    let perturbation = fs::read_to_string(dir.path().join("out/perturbation.csv")).unwrap();
    assert!(perturbation.starts_with("t,tv,delta_norm\n"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("forgetting_rate=0.999875"));
}
