use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ndarray::Array2;
use ssma_rl::model::io::write_matrix;
use ssma_rl::trainer::{read_metrics_csv, METRICS_COLUMNS};

fn run(dir: &Path, config: Option<&str>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ssma-rl"));
    cmd.args(args)
        .arg("--quiet")
        .arg("--out")
        .arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("run.toml");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn unknown_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), Some("[train]\nepsilonn = 0.2\n"), &["train"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilonn"));
}

#[test]
fn invalid_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), Some("[train]\nk = 1\n"), &["train"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn bad_arguments_exit_2_and_help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), None, &["frobnicate"])), 2);
    assert_eq!(code(&run(dir.path(), None, &["train", "--seed", "x"])), 2);
    assert_eq!(code(&run(dir.path(), None, &["--help"])), 0);
}

#[test]
fn missing_config_file_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ssma-rl"))
        .args(["train", "--quiet", "--config"])
        .arg(dir.path().join("absent.toml"))
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn locked_output_directory_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    fs::create_dir_all(&out_dir).unwrap();
    fs::write(out_dir.join(".ssma-rl.lock"), "1\n").unwrap();
    let out = run(dir.path(), None, &["train"]);
    assert_eq!(code(&out), 1);
    assert!(!out_dir.join("metrics.csv").exists());
}

#[test]
fn failed_lemma_check_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[lab]\noracles = 2\nvariance_oracles = 2\nsamples = 1000\nshift_groups = 10\nz_tolerance = 1e-9\n";
    let out = run(dir.path(), Some(cfg), &["estimator-lab"]);
    assert_eq!(code(&out), 4);
    let csv = fs::read_to_string(dir.path().join("out/estimator_lab.csv")).unwrap();
    assert!(csv.starts_with("check,estimator,oracle_id,k,samples"));
}

#[test]
fn all_positive_step_labels_exit_5() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[train]\nprior_skill = 1.0\nprior_logit = 60.0\n";
    let out = run(dir.path(), Some(cfg), &["prm"]);
    assert_eq!(code(&out), 5);
}

#[test]
fn non_finite_checkpoint_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        Some("[train]\nmax_iterations = 1\n"),
        &["train"],
    );
    assert_eq!(code(&out), 0);
    let policy = dir.path().join("out/checkpoint/policy.bin");
    let good = ssma_rl::model::io::read_matrix(&policy).unwrap();
    write_matrix(&policy, &Array2::from_elem(good.dim(), f64::NAN)).unwrap();
    let out = run(dir.path(), None, &["eval"]);
    assert_eq!(code(&out), 3);
}

#[test]
fn one_iteration_writes_header_and_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        Some("[train]\nmax_iterations = 1\n"),
        &["train"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("out/metrics.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], METRICS_COLUMNS.join(","));
    let rows = read_metrics_csv(text.as_bytes()).unwrap();
    assert_eq!(rows[0].iteration, 1);
    for f in ["manifest.json", "config.toml", "train_summary.json"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
    assert!(!dir.path().join("out/.ssma-rl.lock").exists());
}

#[test]
fn trained_checkpoint_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        Some("[train]\nmax_iterations = 2\n"),
        &["train"],
    );
    assert_eq!(code(&out), 0);
    let out = run(dir.path(), None, &["eval"]);
    assert_eq!(code(&out), 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/eval.json")).unwrap())
            .unwrap();
    let sr = report["success_rate"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&sr));
}

#[test]
fn seed_flag_changes_the_run_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[train]\nmax_iterations = 2\n";
    let read = |sub: &str| fs::read(dir.path().join(sub).join("metrics.csv")).unwrap();
    for (sub, seed) in [("a", "1"), ("b", "2")] {
        let path = dir.path().join("run.toml");
        fs::write(&path, cfg).unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_ssma-rl"))
            .args(["train", "--quiet", "--seed", seed, "--config"])
            .arg(&path)
            .arg("--out")
            .arg(dir.path().join(sub))
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
    }
    assert_ne!(read("a"), read("b"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("b/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seeds"][0], 2);
    let resolved = fs::read_to_string(dir.path().join("b/config.toml")).unwrap();
    assert!(resolved.contains("seed = 2"));
}

#[test]
fn compare_writes_curves_summary_and_charts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[compare]\nmethods = [\"android_coach\", \"grpo\"]\nseeds = [1, 2]\ntime_budget = 3000.0\n";
    let out = run(dir.path(), Some(cfg), &["compare"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let root = dir.path().join("out");
    for f in [
        "metrics/android_coach_seed1.csv",
        "metrics/grpo_seed2.csv",
        "summary.json",
        "charts/success_rate_vs_time.svg",
        "charts/interactions_vs_time.svg",
        "charts/samples_vs_time.svg",
    ] {
        assert!(root.join(f).exists(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["ratios"][0]["baseline"], "grpo");
}

#[test]
fn compare_needs_two_methods() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        Some("[compare]\nmethods = [\"ppo\"]\n"),
        &["compare"],
    );
    assert_eq!(code(&out), 2);
}
