use std::path::Path;
use std::process::{Command, Output};

fn gav(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gav"))
        .args(args)
        .current_dir(cwd)
        .env("GAV_THREADS", "1")
        .output()
        .expect("spawn gav")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

/// Small datagen config shared by the pipeline tests.
fn write_config(dir: &Path) {
    std::fs::write(
        dir.join("cfg.json"),
        r#"{"datagen":{"images":12},"test_images":6,"train":{"batch_images":2,"log_every":1}}"#,
    )
    .unwrap();
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(gav(&["train", "--phase", "3"], dir.path()).status.code(), Some(2));
    assert_eq!(gav(&["no-such-command"], dir.path()).status.code(), Some(2));
    assert_eq!(gav(&["search"], dir.path()).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = gav(&["eval", "--data", "missing", "--ckpt", "missing.gav"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_config(d);
    ok(&gav(&["--config", "cfg.json", "datagen", "--out", "data"], d));
    assert!(d.join("data/train/manifest.jsonl").exists());
    assert!(d.join("data/test/manifest.jsonl").exists());
    let stats = std::fs::read_to_string(d.join("data/train_stats.csv")).unwrap();
    assert!(stats.starts_with("metric,bin,count,cumulative\n"));

    ok(&gav(&["--config", "cfg.json", "train", "--data", "data/train", "--out", "run", "--steps", "2"], d));
    let log = std::fs::read_to_string(d.join("run/phase1_log.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("step,phase,loss,accuracy"));
    assert_eq!(log.lines().count(), 3);

    ok(&gav(
        &[
            "--config",
            "cfg.json",
            "train",
            "--phase",
            "2",
            "--ckpt",
            "run/phase1.gav",
            "--data",
            "data/train",
            "--out",
            "run",
            "--steps",
            "2",
        ],
        d,
    ));
    assert!(d.join("run/phase2.gav").exists());

    ok(&gav(&["--config", "cfg.json", "eval", "--data", "data/test", "--ckpt", "run/phase1.gav", "--out", "ev"], d));
    let pr = std::fs::read_to_string(d.join("ev/pr_curve.csv")).unwrap();
    assert_eq!(pr.lines().next(), Some("threshold,precision,recall"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("ev/eval.json")).unwrap()).unwrap();
    assert!(report["pr_auc"].as_f64().unwrap() >= 0.0);

    ok(&gav(
        &["--config", "cfg.json", "probe", "mask", "--data", "data/test", "--ckpt", "run/phase1.gav", "--out", "ev"],
        d,
    ));
    assert!(d.join("ev/probe_mask.json").exists());

    ok(&gav(
        &[
            "--config",
            "cfg.json",
            "margin",
            "--data",
            "data/test",
            "--ckpt",
            "run/phase1.gav",
            "--ckpt",
            "run/phase2.gav",
            "--out",
            "ev",
        ],
        d,
    ));
    assert!(d.join("ev/margin.json").exists());

    let out = gav(
        &["search", "--data", "data/test", "--ckpt", "run/phase1.gav", "--query", "golden dragon", "--threshold", "0"],
        d,
    );
    ok(&out);
    let lines = String::from_utf8(out.stdout).unwrap();
    assert_eq!(lines.lines().count(), 6);
    assert!(lines.lines().all(|l| l.split('\t').count() == 2));
}

#[test]
fn zero_step_training_is_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_config(d);
    ok(&gav(&["--config", "cfg.json", "datagen", "--out", "data"], d));
    for out in ["a", "b"] {
        ok(&gav(
            &["--config", "cfg.json", "--seed", "5", "train", "--data", "data/train", "--out", out, "--steps", "0"],
            d,
        ));
    }
    let a = std::fs::read(d.join("a/phase1.gav")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b/phase1.gav")).unwrap());
    let ck = gav_core::Checkpoint::from_bytes(&a).unwrap();
    assert_eq!(ck.step, 0);
    assert_eq!(ck.model, gav_core::Model::init(ck.config.model.clone(), 5).unwrap());
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = gav(&["gradcheck"], dir.path());
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("model_attention"));
}
