use std::path::Path;

use drgrade_core::features::ClassLabel;
use drgrade_core::lesions::FiveStage;
use drgrade_core::pipeline::*;
use drgrade_core::Error;

fn synth(dir: &Path, n_per_class: usize) -> PipelineConfig {
    let pool = worker_pool(2).unwrap();
    let opts = SynthTreeOptions {
        seed: 7,
        n_per_class,
        ..SynthTreeOptions::default()
    };
    let summary = write_synth_tree(dir, &opts, &pool).unwrap();
    assert_eq!(summary.images, 3 * n_per_class);
    PipelineConfig::load(&summary.config).unwrap()
}

#[test]
fn synth_train_grade_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut cfg = synth(root, 6);

    let missing = Grader::new(&cfg).err().unwrap();
    assert!(
        matches!(missing, Error::MissingInputs(ref m) if m.len() == 1),
        "{missing}"
    );

    let out = cmd_train(
        &cfg,
        &root.join("features/train.csv"),
        &root.join("features/val.csv"),
        &root.join("model"),
    )
    .unwrap();
    assert_eq!(out.table.rows.len(), 7);
    cfg.models.ensemble_path = Some(out.ensemble_path.clone());

    let grader = Grader::new(&cfg).unwrap();
    let nodr = grader.grade(&root.join("images/synth_0000.png"), None).unwrap();
    assert_eq!(nodr.stage.five_level, FiveStage::S0);
    assert!(nodr.lesions.iter().all(|l| l.components == 0));
    let severe = grader
        .grade(&root.join("images/synth_0002.png"), Some(&root.join("overlays")))
        .unwrap();
    assert_eq!(severe.stage.five_level, FiveStage::S3);
    assert_eq!(severe.combined.label, ClassLabel::SevereDr);
    assert!(root.join("overlays/synth_0002_overlay.png").is_file());

    let again = grader.grade(&root.join("images/synth_0002.png"), None).unwrap();
    assert_eq!(severe.to_json_without_timings(), again.to_json_without_timings());
    let text = render_report_file(&{
        let p = root.join("r.json");
        std::fs::write(&p, severe.to_json()).unwrap();
        p
    })
    .unwrap();
    assert!(text.contains("Severe-DR"));

    let eval = cmd_evaluate(&cfg, &root.join("masks"), &root.join("truth")).unwrap();
    assert_eq!(eval.groups.len(), 4);
    for g in &eval.groups {
        assert!(g.mean_iou > 0.8, "{}: {}", g.group, g.mean_iou);
    }
}

#[test]
fn preprocess_batch_reports_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cfg = synth(root, 1);
    std::fs::write(root.join("images/broken.png"), b"not a png").unwrap();
    let labels = drgrade_core::datasets::load_grade_labels(root.join("labels.csv")).unwrap();
    let csv = root.join("pre.csv");
    let pool = worker_pool(2).unwrap();
    let mut cfg_no_anatomy = cfg.clone();
    cfg_no_anatomy.anatomy = Default::default();
    let out = cmd_preprocess(
        &cfg_no_anatomy,
        &root.join("images"),
        &root.join("pre"),
        &pool,
        Some(FeatureExport {
            labels: &labels,
            csv: &csv,
        }),
    )
    .unwrap();
    assert_eq!(out.processed.len(), 3);
    assert_eq!(out.failed.len(), 1);
    assert_eq!(out.failed[0].item, "broken");
    assert_eq!(out.feature_rows, 3);
    assert!(root.join("pre/synth_0001.json").is_file());

    let empty = root.join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = cmd_preprocess(&cfg, &empty, &root.join("pre2"), &pool, None).unwrap();
    assert!(out.processed.is_empty() && out.failed.is_empty());
}

#[test]
fn evaluate_pairs_files() {
    let dir = tempfile::tempdir().unwrap();
    let (p, t) = (dir.path().join("p"), dir.path().join("t"));
    std::fs::create_dir_all(&p).unwrap();
    std::fs::create_dir_all(&t).unwrap();
    let cfg = PipelineConfig::default();
    assert!(matches!(cmd_evaluate(&cfg, &p, &t), Err(Error::NoPairs)));

    use drgrade_core::imgio::{save_binary_mask, BinaryMask};
    let mut a = BinaryMask::empty(4, 4).unwrap();
    let mut b = BinaryMask::empty(4, 4).unwrap();
    for y in 0..4 {
        a.set(0, y, true);
        a.set(1, y, true);
        b.set(1, y, true);
        b.set(2, y, true);
    }
    save_binary_mask(&a, p.join("x.png")).unwrap();
    save_binary_mask(&b, t.join("x.png")).unwrap();
    let r = cmd_evaluate(&cfg, &p, &t).unwrap();
    assert!((r.groups[0].mean_iou - 1.0 / 3.0).abs() < 1e-12);
    save_binary_mask(&b, t.join("y.png")).unwrap();
    assert!(matches!(cmd_evaluate(&cfg, &p, &t), Err(Error::Unpaired(_))));
}
