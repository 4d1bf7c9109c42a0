//! The batch commands behind the CLI verbs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{FeatureBackend, LesionConfig, MaskDirs, PipelineConfig, TrustConfig};
use super::report::{
    CombinedDecision, EnsembleDecision, EvalReport, GradingReport, GroupMetrics, LesionSummary, MetricsRow,
    MetricsTable, Timings,
};
use crate::classifiers::{check_training_set, validate};
use crate::datasets::{files_with_ext, scan_mask_tree, GradeLabel};
use crate::ensemble::{fit_weights, load_ensemble, save_ensemble, train_all, vote, EnsembleModel};
use crate::error::{Error, Result};
use crate::features::{
    fit_scaler, load_features, save_features, ChannelCdfExtractor, ClassLabel, FeatureDataset, FeatureExtractor,
    FeatureVector,
};
use crate::imgio::{
    load_binary_mask, load_gray, load_probmask, load_rgb, same_dims, save_binary_mask, save_probmask, save_rgb,
    to_gray, BinaryMask, GrayImage, RgbImage,
};
use crate::lesions::{binarize, quadrant_counts, stage, LesionKind, LesionMap};
use crate::preprocess::{fundus_mask, mask_centroid, run_chain, PreprocessParams};
use crate::rng::SeededRng;
use crate::synthgen::{gen_fundus, graded_spec, jitter_channels, soften_mask, FundusSpec};
use crate::trust::{
    cohen_kappa, entropy_confidence, f1_score, iou, load_segmentation_meta, mse_quality, LesionTrust, SegmentationMeta,
    TrustReport,
};

pub const IMAGE_EXTS: &[&str] = &["png", "ppm"];

/// A rayon pool of `jobs` workers; 0 picks one per core.
pub fn worker_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidParameter {
            name: "jobs",
            reason: e.to_string(),
        })
}

/// Order-preserving parallel map on the current rayon pool.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.par_iter().map(f).collect()
}

pub fn source_id(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub item: String,
    pub error: String,
}

/// Disc and vessel masks for one image, when their folders are configured.
pub fn load_anatomy(dirs: &MaskDirs, id: &str) -> Result<(Option<BinaryMask>, Option<BinaryMask>)> {
    let load = |dir: &Option<PathBuf>| {
        dir.as_ref()
            .map(|d| load_binary_mask(d.join(format!("{id}.png"))))
            .transpose()
    };
    Ok((load(&dirs.disc_dir)?, load(&dirs.vessel_dir)?))
}

pub fn preprocess_image(cfg: &PipelineConfig, img: &RgbImage, id: &str) -> Result<RgbImage> {
    let (disc, vessels) = load_anatomy(&cfg.anatomy, id)?;
    run_chain(img, &cfg.preprocess, disc.as_ref(), vessels.as_ref())
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    source: String,
    output: String,
    params: &'a PreprocessParams,
    disc_mask: bool,
    vessel_mask: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessOutcome {
    pub processed: Vec<String>,
    pub failed: Vec<ItemFailure>,
    /// Rows written to the feature CSV, when one was requested.
    pub feature_rows: usize,
}

/// Where `cmd_preprocess` writes a labelled feature CSV of its outputs.
pub struct FeatureExport<'a> {
    pub labels: &'a BTreeMap<String, GradeLabel>,
    pub csv: &'a Path,
}

/// Preprocesses every PNG/PPM in `in_dir` into `out_dir` as
/// `<id>.png` plus an `<id>.json` sidecar. Failures are collected per file.
pub fn cmd_preprocess(
    cfg: &PipelineConfig,
    in_dir: &Path,
    out_dir: &Path,
    pool: &rayon::ThreadPool,
    export: Option<FeatureExport<'_>>,
) -> Result<PreprocessOutcome> {
    let inputs = files_with_ext(in_dir, IMAGE_EXTS)?;
    create_dir(out_dir)?;
    let extractor = export.as_ref().map(|_| cfg.features.build()).transpose()?;
    let results: Vec<(String, Result<Option<FeatureVector>>)> = pool.install(|| {
        inputs
            .par_iter()
            .map(|path| {
                let id = source_id(path);
                let run = || -> Result<Option<FeatureVector>> {
                    let img = load_rgb(path)?;
                    let out = preprocess_image(cfg, &img, &id)?;
                    let name = format!("{id}.png");
                    save_rgb(&out, out_dir.join(&name))?;
                    let sidecar = Sidecar {
                        source: path
                            .file_name()
                            .and_then(|n| n.to_str())
                            .unwrap_or_default()
                            .to_string(),
                        output: name,
                        params: &cfg.preprocess,
                        disc_mask: cfg.anatomy.disc_dir.is_some(),
                        vessel_mask: cfg.anatomy.vessel_dir.is_some(),
                    };
                    write_text(
                        &out_dir.join(format!("{id}.json")),
                        &serde_json::to_string_pretty(&sidecar)?,
                    )?;
                    match (&export, &extractor) {
                        (Some(ex), Some(extractor)) if ex.labels.contains_key(&id) => {
                            Ok(Some(extractor.extract(&id, Some(&out))?))
                        }
                        _ => Ok(None),
                    }
                };
                (id.clone(), run())
            })
            .collect()
    });
    let mut outcome = PreprocessOutcome::default();
    let mut rows = Vec::new();
    for (id, r) in results {
        match r {
            Ok(v) => {
                outcome.processed.push(id.clone());
                if let Some(v) = v {
                    rows.push((v, id));
                }
            }
            Err(e) => outcome.failed.push(ItemFailure {
                item: id,
                error: e.to_string(),
            }),
        }
    }
    if let Some(ex) = export {
        let labels = rows.iter().map(|(_, id)| ex.labels[id].label).collect();
        let ds = FeatureDataset::new(rows.into_iter().map(|(v, _)| v).collect(), labels)?;
        outcome.feature_rows = ds.len();
        save_features(&ds, ex.csv)?;
    }
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub table: MetricsTable,
    pub ensemble_path: PathBuf,
    pub model_paths: Vec<PathBuf>,
}

/// Trains the six classifiers on `train_csv`, weighs them on `val_csv`
/// and writes the models, `ensemble.json` and `metrics.{json,txt}`.
/// Nothing is written when either CSV is invalid.
pub fn cmd_train(cfg: &PipelineConfig, train_csv: &Path, val_csv: &Path, out_dir: &Path) -> Result<TrainOutcome> {
    let train = load_features(train_csv)?;
    let val = load_features(val_csv)?;
    check_training_set(&train)?;
    if val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train.dim() != val.dim() {
        return Err(Error::FeatureDimension {
            expected: train.dim(),
            found: val.dim(),
        });
    }
    let scaler = fit_scaler(&train)?;
    let (train_s, val_s) = (train.standardized(&scaler)?, val.standardized(&scaler)?);
    let members = train_all(&train_s, &cfg.models.hyperparams, cfg.seed)?;
    let ens = fit_weights(members, &val_s, cfg.models.weight_basis)?.with_scaler(scaler)?;

    let pct = |v: f64| 100.0 * v;
    let mut rows = Vec::new();
    for m in &ens.members {
        let v = validate(m, &val_s)?;
        rows.push(MetricsRow {
            model: m.kind.display_name().to_string(),
            per_class: v.per_class.map(|a| a.map(pct)),
            overall: pct(v.accuracy),
        });
    }
    let mut correct = [0usize; 3];
    let mut total = [0usize; 3];
    for (x, label) in val_s.rows() {
        total[label.index()] += 1;
        if ens.vote_values(x)?.0 == label {
            correct[label.index()] += 1;
        }
    }
    rows.push(MetricsRow {
        model: "Weighted-vote ensemble".into(),
        per_class: [0, 1, 2].map(|c| (total[c] > 0).then(|| pct(correct[c] as f64 / total[c] as f64))),
        overall: pct(correct.iter().sum::<usize>() as f64 / val_s.len() as f64),
    });
    let table = MetricsTable { rows };

    create_dir(out_dir)?;
    let ensemble_path = out_dir.join("ensemble.json");
    let model_paths = save_ensemble(&ens, &ensemble_path)?;
    write_text(&out_dir.join("metrics.json"), &serde_json::to_string_pretty(&table)?)?;
    write_text(&out_dir.join("metrics.txt"), &table.render_text())?;
    Ok(TrainOutcome {
        table,
        ensemble_path,
        model_paths,
    })
}

/// Overlay colour per lesion kind.
pub fn overlay_color(kind: LesionKind) -> [u8; 3] {
    match kind {
        LesionKind::Hem => [0, 100, 0],
        LesionKind::Se => [255, 105, 180],
        LesionKind::He => [57, 255, 20],
        LesionKind::Ma => [0, 255, 255],
    }
}

/// Paints each mask in its kind's colour over `base`, in report order.
pub fn paint_overlay(base: &RgbImage, masks: &[(LesionKind, BinaryMask)]) -> Result<RgbImage> {
    let mut out = base.clone();
    for (kind, m) in masks {
        same_dims(base.dims(), m.dims())?;
        for y in 0..m.height() {
            for x in 0..m.width() {
                if m.get(x, y) {
                    out.set_pixel(x, y, overlay_color(*kind));
                }
            }
        }
    }
    Ok(out)
}

/// Everything needed to grade images, loaded once.
pub struct Grader {
    cfg: PipelineConfig,
    fingerprint: String,
    ensemble: EnsembleModel,
    extractor: Box<dyn FeatureExtractor>,
    reference: GrayImage,
    meta: BTreeMap<LesionKind, SegmentationMeta>,
    masks_dir: PathBuf,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

impl Grader {
    /// Loads the ensemble, feature backend, quality reference and lesion
    /// model scores; every missing input is listed in the error.
    pub fn new(cfg: &PipelineConfig) -> Result<Self> {
        let mut missing = Vec::new();
        let mut note = |what: String| missing.push(what);
        let ensemble = match &cfg.models.ensemble_path {
            None => {
                note("models.ensemble_path is not set".into());
                None
            }
            Some(p) => load_ensemble(p).map_err(|e| note(e.to_string())).ok(),
        };
        let extractor = cfg.features.build().map_err(|e| note(e.to_string())).ok();
        let reference = match &cfg.trust.reference_image {
            None => {
                note("trust.reference_image is not set".into());
                None
            }
            Some(p) => load_gray(p).map_err(|e| note(e.to_string())).ok(),
        };
        if cfg.lesions.masks_dir.is_none() {
            note("lesions.masks_dir is not set".into());
        }
        let mut meta = BTreeMap::new();
        match &cfg.lesions.metadata_dir {
            None => note("lesions.metadata_dir is not set".into()),
            Some(dir) => {
                for kind in LesionKind::ALL {
                    match load_segmentation_meta(dir.join(format!("{}.json", kind.code()))) {
                        Ok(m) if m.lesion_kind == kind => {
                            meta.insert(kind, m);
                        }
                        Ok(m) => note(format!("{kind} metadata describes {}", m.lesion_kind)),
                        Err(e) => note(e.to_string()),
                    }
                }
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingInputs(missing));
        }
        Ok(Grader {
            cfg: cfg.clone(),
            fingerprint: cfg.fingerprint(),
            ensemble: ensemble.expect("checked"),
            extractor: extractor.expect("checked"),
            reference: reference.expect("checked"),
            meta,
            masks_dir: cfg.lesions.masks_dir.clone().expect("checked"),
        })
    }

    pub fn grade(&self, image_path: &Path, overlay_dir: Option<&Path>) -> Result<GradingReport> {
        let start = Instant::now();
        let mut timings = Timings::default();
        let id = source_id(image_path);
        let img = load_rgb(image_path)?;
        let dims = img.dims();

        let t = Instant::now();
        let pre = preprocess_image(&self.cfg, &img, &id)?;
        timings.preprocess_ms = ms(t);

        let t = Instant::now();
        let fv = self.extractor.extract(&id, Some(&pre))?;
        timings.features_ms = ms(t);

        let t = Instant::now();
        let (label, scores) = vote(&self.ensemble, &fv)?;
        timings.ensemble_ms = ms(t);

        let t = Instant::now();
        let center = mask_centroid(&fundus_mask(&img)).ok_or_else(|| Error::InvalidParameter {
            name: "image",
            reason: format!("{id}: no fundus field found"),
        })?;
        let mut missing = Vec::new();
        let mut probs = Vec::new();
        for kind in LesionKind::ALL {
            let path = self.masks_dir.join(kind.code()).join(format!("{id}.pfmap"));
            match load_probmask(&path) {
                Ok(p) => {
                    same_dims(dims, p.dims())?;
                    probs.push((kind, p));
                }
                Err(Error::MissingFile { path }) => missing.push(format!("{}: file not found", path.display())),
                Err(e) => return Err(e),
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingInputs(missing));
        }
        let lesion_cfg: &LesionConfig = &self.cfg.lesions;
        let per_kind: Vec<_> = probs
            .par_iter()
            .map(|(kind, p)| {
                let threshold = lesion_cfg.threshold_for(*kind).resolve(p);
                let mask = binarize(p, threshold);
                let map = LesionMap::from_mask(*kind, &mask, lesion_cfg.min_area);
                let q = quadrant_counts(&map, dims, center)?;
                let summary = LesionSummary {
                    kind: *kind,
                    threshold,
                    components: map.components.len(),
                    total_area: map.components.iter().map(|c| c.area()).sum(),
                    quadrant_counts: q,
                };
                Ok((summary, map, mask, entropy_confidence(p)))
            })
            .collect::<Result<_>>()?;
        let maps: BTreeMap<_, _> = per_kind.iter().map(|(s, m, _, _)| (s.kind, m.clone())).collect();
        let severity = stage(&maps, dims, center)?;
        timings.lesions_ms = ms(t);

        let t = Instant::now();
        let (_, quality) = mse_quality(&to_gray(&img), &self.reference)?;
        let weights = self.cfg.trust.weights;
        let lesions = per_kind
            .iter()
            .map(|(s, _, _, confidence)| {
                let meta = &self.meta[&s.kind];
                let iou = meta.iou.unwrap_or(meta.f1 / (2.0 - meta.f1));
                LesionTrust::compute(s.kind, *confidence, quality, meta.f1, iou, &weights)
            })
            .collect::<Result<_>>()?;
        timings.trust_ms = ms(t);

        if let Some(dir) = overlay_dir {
            create_dir(dir)?;
            save_rgb(&pre, dir.join(format!("{id}_preprocessed.png")))?;
            let masks: Vec<_> = per_kind.iter().map(|(s, _, m, _)| (s.kind, m.clone())).collect();
            save_rgb(&paint_overlay(&pre, &masks)?, dir.join(format!("{id}_overlay.png")))?;
        }
        timings.total_ms = ms(start);
        Ok(GradingReport {
            source_id: id,
            ensemble: EnsembleDecision {
                label,
                name: label.name().to_string(),
                scores,
            },
            lesions: per_kind.into_iter().map(|(s, _, _, _)| s).collect(),
            combined: CombinedDecision::more_severe(label, severity.three_level),
            stage: severity,
            trust: TrustReport { weights, lesions },
            config_fingerprint: self.fingerprint.clone(),
            timings,
        })
    }
}

pub fn cmd_grade(cfg: &PipelineConfig, image_path: &Path, overlay_dir: Option<&Path>) -> Result<GradingReport> {
    Grader::new(cfg)?.grade(image_path, overlay_dir)
}

fn load_mask_any(path: &Path, threshold: &crate::lesions::ThresholdMode) -> Result<BinaryMask> {
    if path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pfmap"))
    {
        let p = load_probmask(path)?;
        Ok(binarize(&p, threshold.resolve(&p)))
    } else {
        load_binary_mask(path)
    }
}

/// Compares predicted masks with ground truth, pairing files by lesion
/// kind folder and image id. Probability masks are thresholded as in
/// grading.
pub fn cmd_evaluate(cfg: &PipelineConfig, pred_dir: &Path, truth_dir: &Path) -> Result<EvalReport> {
    let pred = scan_mask_tree(pred_dir)?;
    let truth = scan_mask_tree(truth_dir)?;
    let group_name = |g: &Option<LesionKind>| g.map_or("all".to_string(), |k| k.code().to_string());
    let mut unpaired = Vec::new();
    let mut groups: BTreeMap<Option<LesionKind>, Vec<(String, PathBuf, PathBuf)>> = BTreeMap::new();
    let keys: std::collections::BTreeSet<_> = pred.keys().chain(truth.keys()).copied().collect();
    let empty = BTreeMap::new();
    for g in keys {
        let (p, t) = (pred.get(&g).unwrap_or(&empty), truth.get(&g).unwrap_or(&empty));
        for id in p.keys().filter(|id| !t.contains_key(*id)) {
            unpaired.push(format!("prediction {}/{id}", group_name(&g)));
        }
        for id in t.keys().filter(|id| !p.contains_key(*id)) {
            unpaired.push(format!("truth {}/{id}", group_name(&g)));
        }
        let pairs: Vec<_> = p
            .iter()
            .filter_map(|(id, pp)| t.get(id).map(|tp| (id.clone(), pp.clone(), tp.clone())))
            .collect();
        if !pairs.is_empty() {
            groups.insert(g, pairs);
        }
    }
    if !unpaired.is_empty() {
        return Err(Error::Unpaired(unpaired));
    }
    if groups.is_empty() {
        return Err(Error::NoPairs);
    }
    let mut out = Vec::new();
    let (mut all_pred, mut all_truth) = (Vec::new(), Vec::new());
    for (g, pairs) in &groups {
        let threshold = g.map_or(cfg.lesions.threshold, |k| cfg.lesions.threshold_for(k));
        let (mut sum_iou, mut sum_f1) = (0.0, 0.0);
        let (mut pres_pred, mut pres_truth) = (Vec::new(), Vec::new());
        for (_, pp, tp) in pairs {
            let p = load_mask_any(pp, &threshold)?;
            let t = load_mask_any(tp, &threshold)?;
            sum_iou += iou(&p, &t)?;
            sum_f1 += f1_score(&p, &t)?;
            pres_pred.push(!p.is_empty());
            pres_truth.push(!t.is_empty());
        }
        let n = pairs.len() as f64;
        out.push(GroupMetrics {
            group: group_name(g),
            pairs: pairs.len(),
            mean_iou: sum_iou / n,
            mean_f1: sum_f1 / n,
            kappa: cohen_kappa(&pres_pred, &pres_truth)?,
        });
        all_pred.extend(pres_pred);
        all_truth.extend(pres_truth);
    }
    Ok(EvalReport {
        groups: out,
        overall_kappa: cohen_kappa(&all_pred, &all_truth)?,
    })
}

/// Loads whichever report document `path` holds and renders it as text.
pub fn render_report_file(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if let Ok(r) = serde_json::from_str::<GradingReport>(&text) {
        return Ok(r.render_text());
    }
    if let Ok(t) = serde_json::from_str::<MetricsTable>(&text) {
        return Ok(t.render_text());
    }
    if let Ok(e) = serde_json::from_str::<EvalReport>(&text) {
        return Ok(e.render_text());
    }
    Err(Error::CorruptPayload {
        path: path.into(),
        reason: "not a grading, metrics or evaluation report".into(),
    })
}

/// Smallest side that fits the severe class's hemorrhage count.
pub const MIN_SYNTH_TREE_SIDE: usize = 192;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTreeOptions {
    pub seed: u64,
    pub n_per_class: usize,
    pub dims: (usize, usize),
    pub val_fraction: f64,
}

impl Default for SynthTreeOptions {
    fn default() -> Self {
        SynthTreeOptions {
            seed: 0,
            n_per_class: 10,
            dims: (256, 256),
            val_fraction: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTreeSummary {
    pub images: usize,
    pub train_rows: usize,
    pub val_rows: usize,
    pub config: PathBuf,
}

fn synth_five_level(class: ClassLabel, spec: &FundusSpec) -> u8 {
    match class {
        ClassLabel::NoDr => 0,
        ClassLabel::MildDr if spec.keys().all(|k| *k == LesionKind::Ma) => 1,
        ClassLabel::MildDr => 2,
        ClassLabel::SevereDr => 3,
    }
}

/// Writes a complete synthetic dataset:
///
/// ```text
/// images/<id>.png  disc/<id>.png  vessels/<id>.png  labels.csv
/// truth/<KIND>/<id>.png  masks/<KIND>/<id>.pfmap  metadata/<KIND>.json
/// reference.png  features/{train,val}.csv  config.json
/// ```
///
/// Images cycle through the three grades. The config points at every
/// input `grade` needs except the ensemble, which `train` produces.
pub fn write_synth_tree(out: &Path, opts: &SynthTreeOptions, pool: &rayon::ThreadPool) -> Result<SynthTreeSummary> {
    if opts.dims.0.min(opts.dims.1) < MIN_SYNTH_TREE_SIDE {
        return Err(Error::InvalidParameter {
            name: "dims",
            reason: format!("severe images need at least {MIN_SYNTH_TREE_SIDE} px per side"),
        });
    }
    if opts.n_per_class == 0 || !(0.0..1.0).contains(&opts.val_fraction) {
        return Err(Error::InvalidParameter {
            name: "n_per_class",
            reason: "need at least one image per class and a validation fraction in [0, 1)".into(),
        });
    }
    let n = 3 * opts.n_per_class;
    for sub in ["images", "disc", "vessels", "features", "metadata"] {
        create_dir(&out.join(sub))?;
    }
    for kind in LesionKind::ALL {
        create_dir(&out.join("truth").join(kind.code()))?;
        create_dir(&out.join("masks").join(kind.code()))?;
    }
    let mut master = SeededRng::new(opts.seed);
    let seeds: Vec<u64> = (0..n).map(|_| master.next_u64()).collect();
    let cfg = PipelineConfig {
        anatomy: MaskDirs {
            disc_dir: Some("disc".into()),
            vessel_dir: Some("vessels".into()),
        },
        features: FeatureBackend::ChannelCdf,
        lesions: LesionConfig {
            masks_dir: Some("masks".into()),
            metadata_dir: Some("metadata".into()),
            ..LesionConfig::default()
        },
        trust: TrustConfig {
            reference_image: Some("reference.png".into()),
            ..TrustConfig::default()
        },
        seed: opts.seed,
        ..PipelineConfig::default()
    };

    type Item = (String, ClassLabel, u8, FeatureVector, [(usize, usize, usize); 4]);
    let items: Vec<Item> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| -> Result<Item> {
                let id = format!("synth_{i:04}");
                let class = ClassLabel::ALL[i % 3];
                let mut rng = SeededRng::new(seeds[i]);
                let spec = graded_spec(class, &mut rng);
                let f = gen_fundus(rng.next_u64(), opts.dims, &spec)?;
                let image = jitter_channels(&f.image, &fundus_mask(&f.image), 0.1, 8.0, &mut rng);
                save_rgb(&image, out.join("images").join(format!("{id}.png")))?;
                save_binary_mask(&f.disc, out.join("disc").join(format!("{id}.png")))?;
                save_binary_mask(&f.vessels, out.join("vessels").join(format!("{id}.png")))?;
                let mut counts = [(0, 0, 0); 4];
                for (k, kind) in LesionKind::ALL.into_iter().enumerate() {
                    let truth = &f.lesions[&kind];
                    save_binary_mask(truth, out.join("truth").join(kind.code()).join(format!("{id}.png")))?;
                    let soft = soften_mask(truth, rng.next_u64());
                    save_probmask(&soft, out.join("masks").join(kind.code()).join(format!("{id}.pfmap")))?;
                    let pred = binarize(&soft, cfg.lesions.threshold_for(kind).resolve(&soft));
                    let tp = pred.data().iter().zip(truth.data()).filter(|(p, t)| **p && **t).count();
                    counts[k] = (tp, pred.count() - tp, truth.count() - tp);
                }
                let pre = run_chain(&image, &cfg.preprocess, Some(&f.disc), Some(&f.vessels))?;
                let fv = ChannelCdfExtractor.extract(&id, Some(&pre))?;
                Ok((id, class, synth_five_level(class, &spec), fv, counts))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let reference = gen_fundus(opts.seed ^ 0x9e37_79b9_7f4a_7c15, opts.dims, &FundusSpec::new())?;
    save_rgb(&reference.image, out.join("reference.png"))?;

    let mut labels = String::from("id_code,diagnosis\n");
    for (id, _, grade, _, _) in &items {
        labels.push_str(&format!("{id},{grade}\n"));
    }
    write_text(&out.join("labels.csv"), &labels)?;

    for (k, kind) in LesionKind::ALL.into_iter().enumerate() {
        let (tp, fp, fn_) = items.iter().fold((0, 0, 0), |acc, it| {
            let c = it.4[k];
            (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2)
        });
        let denom = 2 * tp + fp + fn_;
        let f1 = if denom == 0 {
            1.0
        } else {
            2.0 * tp as f64 / denom as f64
        };
        let union = tp + fp + fn_;
        let iou = if union == 0 { 1.0 } else { tp as f64 / union as f64 };
        let meta = SegmentationMeta {
            lesion_kind: kind,
            f1,
            iou: Some(iou),
        };
        write_text(
            &out.join("metadata").join(format!("{}.json", kind.code())),
            &serde_json::to_string_pretty(&meta)?,
        )?;
    }

    let (vectors, labels): (Vec<_>, Vec<_>) = items.iter().map(|it| (it.3.clone(), it.1)).unzip();
    let ds = FeatureDataset::new(vectors, labels)?;
    let (train, val) = ds.stratified_split(opts.val_fraction, opts.seed);
    save_features(&train, out.join("features").join("train.csv"))?;
    save_features(&val, out.join("features").join("val.csv"))?;

    let config = out.join("config.json");
    write_text(&config, &serde_json::to_string_pretty(&cfg)?)?;
    Ok(SynthTreeSummary {
        images: n,
        train_rows: train.len(),
        val_rows: val.len(),
        config,
    })
}
