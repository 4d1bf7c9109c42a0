//! WebAssembly bindings for the browser demo: preprocess a synthetic
//! fundus, threshold and stage its lesion maps, and compute trust and
//! kappa values.
//!
//! The exported wrappers only convert errors; the logic lives in plain
//! functions so it can be tested natively.

use std::collections::BTreeMap;

use drgrade_core::features::ClassLabel;
use drgrade_core::imgio::{BinaryMask, ProbMask, RgbImage};
use drgrade_core::lesions::{binarize, quadrant_counts, stage, LesionKind, LesionMap, ThresholdMode};
use drgrade_core::preprocess::{run_chain, ClaheParams, ColorStats, GaussianParams, PreprocessParams};
use drgrade_core::rng::SeededRng;
use drgrade_core::synthgen::{gen_fundus, graded_spec, jitter_channels, soften_mask};
use drgrade_core::trust::{cohen_kappa, weighted_trust, Kappa, TrustWeights};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Lesion overlay colours, matching the CLI overlays.
fn color(kind: LesionKind) -> [u8; 3] {
    drgrade_core::pipeline::commands::overlay_color(kind)
}

pub struct DemoState {
    pub image: RgbImage,
    pub disc: BinaryMask,
    pub vessels: BinaryMask,
    pub soft: BTreeMap<LesionKind, ProbMask>,
    pub center: (f64, f64),
}

#[derive(Debug, Serialize)]
pub struct KindResult {
    pub kind: LesionKind,
    pub threshold: f64,
    pub components: usize,
    pub quadrant_counts: [usize; 4],
}

#[derive(Debug, Serialize)]
pub struct StageResult {
    pub lesions: Vec<KindResult>,
    pub five_level: String,
    pub three_level: String,
    pub reason: String,
}

impl DemoState {
    /// A jittered synthetic fundus of the given grade (0, 1 or 2).
    pub fn generate(seed: u64, grade: u8, size: usize) -> Result<Self, String> {
        let class = ClassLabel::from_index(grade as usize).ok_or("grade must be 0, 1 or 2")?;
        let mut rng = SeededRng::new(seed);
        let spec = graded_spec(class, &mut rng);
        let f = gen_fundus(rng.next_u64(), (size, size), &spec).map_err(|e| e.to_string())?;
        let field = drgrade_core::preprocess::fundus_mask(&f.image);
        let image = jitter_channels(&f.image, &field, 0.1, 8.0, &mut rng);
        let soft = f
            .lesions
            .iter()
            .map(|(k, m)| (*k, soften_mask(m, rng.next_u64())))
            .collect();
        Ok(DemoState {
            image,
            disc: f.disc,
            vessels: f.vessels,
            soft,
            center: f.center,
        })
    }

    pub fn preprocess(&self, clip_limit: f64, sigma: f64, normalize: bool) -> Result<RgbImage, String> {
        let radius = (3.0 * sigma).ceil().max(1.0) as usize;
        let params = PreprocessParams {
            clahe: (clip_limit > 0.0).then_some(ClaheParams {
                clip_limit,
                ..ClaheParams::default()
            }),
            color_reference: normalize.then(ColorStats::default),
            gaussian: (sigma > 0.0).then_some(GaussianParams {
                sigma_x: sigma,
                sigma_y: sigma,
                radius_a: radius,
                radius_b: radius,
                ..GaussianParams::default()
            }),
            ..PreprocessParams::default()
        };
        run_chain(&self.image, &params, Some(&self.disc), Some(&self.vessels)).map_err(|e| e.to_string())
    }

    /// A negative `threshold` selects Otsu with the default floor.
    fn mode(threshold: f64) -> Result<ThresholdMode, String> {
        let mode = if threshold < 0.0 {
            ThresholdMode::default()
        } else {
            ThresholdMode::Fixed { value: threshold }
        };
        mode.validate().map_err(|e| e.to_string())?;
        Ok(mode)
    }

    fn masks(&self, threshold: f64) -> Result<Vec<(LesionKind, f64, BinaryMask)>, String> {
        let mode = Self::mode(threshold)?;
        Ok(self
            .soft
            .iter()
            .map(|(k, p)| {
                let t = mode.resolve(p);
                (*k, t, binarize(p, t))
            })
            .collect())
    }

    pub fn stage(&self, threshold: f64, min_area: usize) -> Result<StageResult, String> {
        let dims = self.image.dims();
        let mut maps = BTreeMap::new();
        let mut lesions = Vec::new();
        for (kind, t, mask) in self.masks(threshold)? {
            let map = LesionMap::from_mask(kind, &mask, min_area);
            lesions.push(KindResult {
                kind,
                threshold: t,
                components: map.components.len(),
                quadrant_counts: quadrant_counts(&map, dims, self.center).map_err(|e| e.to_string())?,
            });
            maps.insert(kind, map);
        }
        let s = stage(&maps, dims, self.center).map_err(|e| e.to_string())?;
        Ok(StageResult {
            lesions,
            five_level: format!("{:?}", s.five_level),
            three_level: s.three_level.name().to_string(),
            reason: s.reason,
        })
    }

    /// The image with thresholded lesions painted in their colours.
    pub fn overlay(&self, threshold: f64) -> Result<RgbImage, String> {
        let mut out = self.image.clone();
        for (kind, _, mask) in self.masks(threshold)? {
            for y in 0..mask.height() {
                for x in 0..mask.width() {
                    if mask.get(x, y) {
                        out.set_pixel(x, y, color(kind));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Kappa for a 2x2 agreement table between two raters.
pub fn kappa_from_table(both_yes: u32, only_a: u32, only_b: u32, both_no: u32) -> Result<Kappa, String> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (n, va, vb) in [
        (both_yes, true, true),
        (only_a, true, false),
        (only_b, false, true),
        (both_no, false, false),
    ] {
        a.extend(std::iter::repeat_n(va, n as usize));
        b.extend(std::iter::repeat_n(vb, n as usize));
    }
    cohen_kappa(&a, &b).map_err(|e| e.to_string())
}

pub fn trust_percent_of(quality: f64, f1: f64, confidence: f64, weights: [f64; 3]) -> Result<u32, String> {
    let w = TrustWeights::new(weights[0], weights[1], weights[2]).map_err(|e| e.to_string())?;
    weighted_trust(quality, f1, confidence, &w).map_err(|e| e.to_string())
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen]
pub struct Demo {
    state: DemoState,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, grade: u8, size: usize) -> Result<Demo, JsError> {
        Ok(Demo {
            state: DemoState::generate(seed as u64, grade, size).map_err(js)?,
        })
    }

    pub fn width(&self) -> usize {
        self.state.image.width()
    }

    pub fn height(&self) -> usize {
        self.state.image.height()
    }

    pub fn original_rgba(&self) -> Vec<u8> {
        self.state.image.to_rgba()
    }

    pub fn preprocess_rgba(&self, clip_limit: f64, sigma: f64, normalize: bool) -> Result<Vec<u8>, JsError> {
        Ok(self
            .state
            .preprocess(clip_limit, sigma, normalize)
            .map_err(js)?
            .to_rgba())
    }

    /// Staging result as JSON; a negative threshold selects Otsu.
    pub fn stage_json(&self, threshold: f64, min_area: usize) -> Result<String, JsError> {
        let r = self.state.stage(threshold, min_area).map_err(js)?;
        Ok(serde_json::to_string(&r)?)
    }

    pub fn overlay_rgba(&self, threshold: f64) -> Result<Vec<u8>, JsError> {
        Ok(self.state.overlay(threshold).map_err(js)?.to_rgba())
    }
}

#[wasm_bindgen]
pub fn trust_percent(
    quality: f64,
    f1: f64,
    confidence: f64,
    w_quality: f64,
    w_f1: f64,
    w_conf: f64,
) -> Result<u32, JsError> {
    trust_percent_of(quality, f1, confidence, [w_quality, w_f1, w_conf]).map_err(js)
}

/// Kappa, observed and chance agreement and band label, as JSON.
#[wasm_bindgen]
pub fn kappa_json(both_yes: u32, only_a: u32, only_b: u32, both_no: u32) -> Result<String, JsError> {
    Ok(serde_json::to_string(
        &kappa_from_table(both_yes, only_a, only_b, both_no).map_err(js)?,
    )?)
}
