use std::path::Path;
use std::process::{Command, Output};

fn drgrade(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drgrade"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_str(&ok(out)).unwrap()
}

/// Synthetic tree plus a trained ensemble under `dir`.
fn trained(dir: &Path) {
    ok(&drgrade(
        &[
            "--seed",
            "11",
            "--jobs",
            "2",
            "synthgen",
            "--out",
            "d",
            "--n-per-class",
            "5",
        ],
        dir,
    ));
    ok(&drgrade(
        &[
            "--config",
            "d/config.json",
            "train",
            "--train",
            "d/features/train.csv",
            "--val",
            "d/features/val.csv",
            "--out",
            "d/model",
        ],
        dir,
    ));
}

fn without_timings(mut v: serde_json::Value) -> serde_json::Value {
    v.as_object_mut().unwrap().remove("timings");
    v
}

#[test]
fn grade_end_to_end_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    trained(dir);
    let grade = |img: &str| {
        json(&drgrade(
            &[
                "--config",
                "d/config.json",
                "--format",
                "json",
                "grade",
                img,
                "--ensemble",
                "d/model/ensemble.json",
            ],
            dir,
        ))
    };
    let nodr = grade("d/images/synth_0000.png");
    assert_eq!(nodr["stage"]["five_level"], "S0");
    assert_eq!(nodr["combined"]["name"], "No-DR");
    let severe = grade("d/images/synth_0002.png");
    assert_eq!(severe["stage"]["five_level"], "S3");
    assert_eq!(severe["combined"]["name"], "Severe-DR");
    assert_eq!(severe["trust"]["lesions"].as_array().unwrap().len(), 4);
    assert_eq!(
        without_timings(grade("d/images/synth_0002.png")),
        without_timings(severe)
    );

    let all = json(&drgrade(
        &[
            "--config",
            "d/config.json",
            "--format",
            "json",
            "grade",
            "d/images",
            "--ensemble",
            "d/model/ensemble.json",
            "--report-dir",
            "r",
        ],
        dir,
    ));
    assert_eq!(all.as_array().unwrap().len(), 15);
    let text = ok(&drgrade(&["report", "r/synth_0002.json"], dir));
    assert!(text.contains("Severe-DR") && text.contains("Trust"));
}

#[test]
fn synthgen_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for out in ["a", "b"] {
        ok(&drgrade(
            &[
                "--seed",
                "5",
                "synthgen",
                "--out",
                out,
                "--n-per-class",
                "2",
                "--size",
                "192",
            ],
            dir,
        ));
    }
    let mut files: Vec<_> = walk(&dir.join("a"));
    files.sort();
    assert!(files.len() > 40);
    for f in files {
        let rel = f.strip_prefix(dir.join("a")).unwrap();
        assert_eq!(
            std::fs::read(&f).unwrap(),
            std::fs::read(dir.join("b").join(rel)).unwrap(),
            "{}",
            rel.display()
        );
    }
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn exit_status_reflects_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    trained(dir);
    std::fs::create_dir(dir.join("imgs")).unwrap();
    std::fs::copy(dir.join("d/images/synth_0001.png"), dir.join("imgs/synth_0001.png")).unwrap();
    std::fs::write(dir.join("imgs/bad.png"), b"junk").unwrap();
    let out = drgrade(
        &[
            "--config",
            "d/config.json",
            "grade",
            "imgs",
            "--ensemble",
            "d/model/ensemble.json",
        ],
        dir,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.png"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("synth_0001"));

    // Grading without an ensemble names what is missing.
    let out = drgrade(&["--config", "d/config.json", "grade", "imgs/synth_0001.png"], dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ensemble_path"));

    std::fs::create_dir(dir.join("empty")).unwrap();
    ok(&drgrade(&["preprocess", "--input", "empty", "--output", "pre"], dir));

    std::fs::write(dir.join("bad.json"), r#"{"trust": {"weights": {"w_quality": "high"}}}"#).unwrap();
    let out = drgrade(
        &[
            "--config", "bad.json", "evaluate", "--pred", "d/masks", "--truth", "d/truth",
        ],
        dir,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trust.weights.w_quality"));
}

#[test]
fn preprocess_writes_features_that_train() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&drgrade(
        &[
            "--seed",
            "2",
            "synthgen",
            "--out",
            "d",
            "--n-per-class",
            "4",
            "--size",
            "192",
        ],
        dir,
    ));
    let out = json(&drgrade(
        &[
            "--format",
            "json",
            "preprocess",
            "--input",
            "d/images",
            "--output",
            "pre",
            "--labels",
            "d/labels.csv",
            "--features-out",
            "f.csv",
        ],
        dir,
    ));
    assert_eq!(out["feature_rows"], 12);
    assert!(dir.join("pre/synth_0003.png").is_file() && dir.join("pre/synth_0003.json").is_file());
    let eval = json(&drgrade(
        &[
            "--format", "json", "evaluate", "--pred", "d/masks", "--truth", "d/truth", "--out", "e.json",
        ],
        dir,
    ));
    assert_eq!(eval["groups"].as_array().unwrap().len(), 4);
    assert!(ok(&drgrade(&["report", "e.json"], dir)).contains("overall kappa"));
}
