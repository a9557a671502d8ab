//! End-to-end tests of the command-line binary: run-directory artifacts,
//! interrupt/resume equivalence, config-mismatch refusal, and the
//! enumeration-based bound check.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gpim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpim"))
        .args(args)
        .output()
        .expect("failed to launch binary")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const SMALL_CONFIG: &str = "\
[experiment]
env = gridworld4
cycles = 4
eval_goals = 4

[sac]
hidden = 16
batch_size = 8
buffer_capacity = 512

[perception]
hidden = 8
";

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.ini");
    fs::write(&path, SMALL_CONFIG).unwrap();
    path
}

#[test]
fn train_zero_budget_creates_run_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out_dir = dir.path().join("runs");
    let out = gpim(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
        "--max-cycles",
        "0",
    ]);
    assert_ok(&out);
    let run = out_dir.join("run-1");
    for name in [
        "config.ini",
        "config_hash.txt",
        "seeds.txt",
        "git.txt",
        "checkpoint-initial.bin",
        "checkpoint.bin",
        "metrics.csv",
    ] {
        assert!(run.join(name).exists(), "missing {name}");
    }
    let hash = fs::read_to_string(run.join("config_hash.txt")).unwrap();
    assert_eq!(hash.trim().len(), 16);
    assert_eq!(
        fs::read_to_string(run.join("seeds.txt")).unwrap().trim(),
        "1"
    );
    // Zero budget: the metric log has only its header.
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1);
}

#[test]
fn interrupted_run_resumes_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let straight = dir.path().join("straight");
    let split = dir.path().join("split");
    let out = gpim(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        straight.to_str().unwrap(),
    ]);
    assert_ok(&out);
    // Same budget, interrupted halfway and rerun to completion.
    for _ in 0..2 {
        let out = gpim(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "3",
            "--out",
            split.to_str().unwrap(),
            "--max-cycles",
            "2",
        ]);
        assert_ok(&out);
    }
    for name in ["checkpoint.bin", "metrics.csv"] {
        let a = fs::read(straight.join("run-3").join(name)).unwrap();
        let b = fs::read(split.join("run-3").join(name)).unwrap();
        assert_eq!(a, b, "{name} diverged after resume");
    }
}

#[test]
fn resume_with_changed_config_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out_dir = dir.path().join("runs");
    let out = gpim(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
        "--max-cycles",
        "1",
    ]);
    assert_ok(&out);
    let edited = dir.path().join("edited.ini");
    fs::write(&edited, SMALL_CONFIG.replace("hidden = 16", "hidden = 32")).unwrap();
    let out = gpim(&[
        "train",
        "--config",
        edited.to_str().unwrap(),
        "--seed",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("configuration"), "stderr: {stderr}");
}

#[test]
fn rerun_of_finished_run_is_a_noop() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out_dir = dir.path().join("runs");
    let args = [
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        out_dir.to_str().unwrap(),
    ];
    assert_ok(&gpim(&args));
    let run = out_dir.join("run-5");
    let ck = fs::read(run.join("checkpoint.bin")).unwrap();
    let metrics = fs::read(run.join("metrics.csv")).unwrap();
    assert_ok(&gpim(&args));
    assert_eq!(fs::read(run.join("checkpoint.bin")).unwrap(), ck);
    assert_eq!(fs::read(run.join("metrics.csv")).unwrap(), metrics);
}

#[test]
fn eval_reads_a_trained_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out_dir = dir.path().join("runs");
    assert_ok(&gpim(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
        "--max-cycles",
        "1",
    ]));
    let ck = out_dir.join("run-1").join("checkpoint.bin");
    let summary = dir.path().join("eval.json");
    let out = gpim(&[
        "eval",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "1",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--out",
        summary.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("dist_final = "), "stdout: {stdout}");
    let json = fs::read_to_string(summary).unwrap();
    assert!(json.contains("dist_final"));
}

#[test]
fn invalid_config_reports_line_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.ini");
    fs::write(&path, "[experiment]\nenv = gridworld4\nturbo = yes\n").unwrap();
    let out = gpim(&["train", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 3"), "stderr: {stderr}");
}

#[test]
fn theory_check_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("bounds.csv");
    let out = gpim(&[
        "theory-check",
        "--instances",
        "20",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("0 violations"), "stdout: {stdout}");
    let text = fs::read_to_string(report).unwrap();
    // Header, the matched fixture, and 20 randomized instances.
    assert_eq!(text.lines().count(), 22);
}

#[test]
fn heatmap_export_and_goals_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out_dir = dir.path().join("runs");
    assert_ok(&gpim(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
        "--max-cycles",
        "1",
    ]));
    let ck = out_dir.join("run-1").join("checkpoint.bin");
    let map = dir.path().join("heatmap.csv");
    assert_ok(&gpim(&[
        "heatmap",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "1",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--skill",
        "2",
        "--grid",
        "8",
        "--out",
        map.to_str().unwrap(),
    ]));
    assert!(fs::read_to_string(map).unwrap().lines().count() > 1);
    let goals = dir.path().join("goals.csv");
    let out = gpim(&[
        "goals",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "1",
        "--grid",
        "4",
        "--out",
        goals.to_str().unwrap(),
    ]);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("coverage = "));
    let export = dir.path().join("export");
    assert_ok(&gpim(&[
        "export",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "1",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--out",
        export.to_str().unwrap(),
    ]));
    assert!(export.join("embeddings.csv").exists());
    assert!(export.join("summary.json").exists());
}

#[test]
fn baseline_training_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("l2.ini");
    let text = SMALL_CONFIG.replace("env = gridworld4", "env = nav2d_xy\nmethod = l2");
    fs::write(&path, text).unwrap();
    let out_dir = dir.path().join("runs");
    let out = gpim(&[
        "train",
        "--config",
        path.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let metrics = out_dir.join("run-1").join("metrics.csv");
    assert!(fs::read_to_string(metrics).unwrap().lines().count() > 1);
}
