use std::path::Path;
use std::process::{Command, Output};

const SYNTH: &str = r#"{"samples": 16000, "weld_count": 8, "defect_count": 6, "seed": 4}"#;
const TRAIN: &str = r#"{"arch": "RayNet", "epochs": 2, "batch_size": 16, "seed": 2}"#;

fn mflkit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mflkit"))
        .current_dir(dir)
        .env("MFLKIT_THREADS", "1")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = mflkit(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Synthesizes and preprocesses a small scan under `dir`.
fn prepared(dir: &Path) {
    let mut synth: serde_json::Value = serde_json::to_value(mflkit::synth::default_desk_config()).unwrap();
    for (k, v) in serde_json::from_str::<serde_json::Map<String, serde_json::Value>>(SYNTH).unwrap() {
        synth[k] = v;
    }
    std::fs::write(dir.join("synth.json"), synth.to_string()).unwrap();
    std::fs::write(dir.join("pre.json"), r#"{"healthy_limit": 60, "seed": 1}"#).unwrap();
    std::fs::write(dir.join("train.json"), TRAIN).unwrap();
    ok(dir, &["synth", "--config", "synth.json", "--out", "s"]);
    ok(
        dir,
        &[
            "preprocess",
            "--scan",
            "s/scan.mfls",
            "--report",
            "s/delivered_report.json",
            "--config",
            "pre.json",
            "--out",
            "p",
        ],
    );
}

#[test]
fn full_pipeline_and_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepared(dir);
    ok(dir, &["augment", "--dataset", "p", "--seed", "3", "--out", "a"]);
    ok(
        dir,
        &["train", "--dataset", "a", "--config", "train.json", "--out", "t"],
    );

    // Same run split across two invocations.
    ok(
        dir,
        &[
            "train",
            "--dataset",
            "a",
            "--config",
            "train.json",
            "--out",
            "r",
            "--max-epochs",
            "1",
        ],
    );
    let partial = std::fs::read_to_string(dir.join("r/history.jsonl")).unwrap();
    assert_eq!(partial.lines().count(), 1);
    ok(
        dir,
        &[
            "train",
            "--dataset",
            "a",
            "--config",
            "train.json",
            "--out",
            "r",
            "--resume",
        ],
    );
    for f in ["checkpoint.mflc", "history.jsonl", "manifest.json"] {
        assert_eq!(
            std::fs::read(dir.join("t").join(f)).unwrap(),
            std::fs::read(dir.join("r").join(f)).unwrap(),
            "{f}"
        );
    }

    ok(
        dir,
        &[
            "eval",
            "--dataset",
            "a",
            "--checkpoint",
            "t/checkpoint.mflc",
            "--arch",
            "RayNet",
            "--out",
            "e",
        ],
    );
    let csv = std::fs::read_to_string(dir.join("e/recall.csv")).unwrap();
    assert!(csv.starts_with("Method,healthy,defect,weld,Average\nRayNet,"));

    ok(dir, &["render", "--dataset", "p", "--limit", "4", "--out", "img"]);
    assert_eq!(std::fs::read_dir(dir.join("img")).unwrap().count(), 4);

    // Manifests never carry the machine's paths.
    let root = dir.to_string_lossy().to_string();
    for m in [
        "s/manifest.json",
        "p/manifest.json",
        "a/manifest.json",
        "t/manifest.json",
    ] {
        let text = std::fs::read_to_string(dir.join(m)).unwrap();
        assert!(!text.contains(&root), "{m} mentions {root}");
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(mflkit(dir, &["--help"]).status.code(), Some(0));
    assert_eq!(mflkit(dir, &["no-such-command"]).status.code(), Some(1));

    std::fs::write(dir.join("bad.json"), r#"{"batch_size": 1}"#).unwrap();
    let out = mflkit(
        dir,
        &["train", "--dataset", "nowhere", "--config", "bad.json", "--out", "t"],
    );
    assert_eq!(out.status.code(), Some(1), "invalid config is a usage error");

    let out = mflkit(
        dir,
        &[
            "preprocess",
            "--scan",
            "missing.mfls",
            "--report",
            "missing.json",
            "--out",
            "p",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "missing input is a data error");

    prepared(dir);
    ok(
        dir,
        &[
            "train",
            "--dataset",
            "p",
            "--config",
            "train.json",
            "--out",
            "t",
            "--max-epochs",
            "1",
        ],
    );
    let out = mflkit(
        dir,
        &[
            "eval",
            "--dataset",
            "p",
            "--checkpoint",
            "t/checkpoint.mflc",
            "--arch",
            "CNN5",
            "--out",
            "e",
        ],
    );
    assert_eq!(out.status.code(), Some(2), "architecture mismatch");

    std::fs::create_dir_all(dir.join("busy")).unwrap();
    std::fs::write(dir.join("busy/.mflkit.lock"), "1").unwrap();
    let out = mflkit(dir, &["synth", "--config", "synth.json", "--out", "busy"]);
    assert_eq!(out.status.code(), Some(2), "locked output directory");
}

#[test]
fn filling_comparison_renders_every_method() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepared(dir);
    ok(
        dir,
        &[
            "render",
            "--scan",
            "s/scan.mfls",
            "--filling-comparison",
            "5",
            "--out",
            "f",
        ],
    );
    let mut names: Vec<String> = std::fs::read_dir(dir.join("f"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.len(), 6);
    assert_eq!(names[0], "tile000005_filling1.png");
    assert_eq!(names[5], "tile000005_raw.png");
}
