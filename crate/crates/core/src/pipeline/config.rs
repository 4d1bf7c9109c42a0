//! The pipeline configuration document.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifiers::Hyperparams;
use crate::ensemble::WeightBasis;
use crate::error::{Error, Result};
use crate::features::{ChannelCdfExtractor, ConcatExtractor, FeatureExtractor, FileExtractor};
use crate::lesions::{LesionKind, ThresholdMode, DEFAULT_MIN_AREA};
use crate::preprocess::PreprocessParams;
use crate::trust::TrustWeights;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureBackend {
    /// Distribution features computed from the preprocessed image.
    #[default]
    ChannelCdf,
    /// Vectors looked up by source id in a feature CSV.
    File { path: PathBuf },
    /// An exported network with one `1x3xHxW` input in [0, 1].
    Onnx {
        path: PathBuf,
        input_height: usize,
        input_width: usize,
    },
    /// Outputs of several backends joined in order.
    Concat { parts: Vec<FeatureBackend> },
}

impl FeatureBackend {
    fn paths(&self) -> Vec<&Path> {
        match self {
            FeatureBackend::ChannelCdf => vec![],
            FeatureBackend::File { path } | FeatureBackend::Onnx { path, .. } => vec![path],
            FeatureBackend::Concat { parts } => parts.iter().flat_map(|p| p.paths()).collect(),
        }
    }

    fn resolve(&mut self, base: &Path) {
        match self {
            FeatureBackend::ChannelCdf => {}
            FeatureBackend::File { path } | FeatureBackend::Onnx { path, .. } => *path = base.join(&*path),
            FeatureBackend::Concat { parts } => parts.iter_mut().for_each(|p| p.resolve(base)),
        }
    }

    pub fn build(&self) -> Result<Box<dyn FeatureExtractor>> {
        Ok(match self {
            FeatureBackend::ChannelCdf => Box::new(ChannelCdfExtractor),
            FeatureBackend::File { path } => Box::new(FileExtractor::load(path)?),
            #[cfg(feature = "onnx")]
            FeatureBackend::Onnx {
                path,
                input_height,
                input_width,
            } => Box::new(crate::features::OnnxExtractor::load(path, *input_height, *input_width)?),
            #[cfg(not(feature = "onnx"))]
            FeatureBackend::Onnx { .. } => {
                return Err(Error::Inference("this build has no ONNX support".into()));
            }
            FeatureBackend::Concat { parts } => {
                let mut built = parts.iter().map(|p| p.build());
                let first = built.next().ok_or(Error::InvalidParameter {
                    name: "features.parts",
                    reason: "concat needs at least one part".into(),
                })??;
                let mut acc = first;
                for next in built {
                    acc = Box::new(ConcatExtractor {
                        first: acc,
                        second: next?,
                    });
                }
                acc
            }
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hyperparams: Hyperparams,
    pub weight_basis: WeightBasis,
    /// Ensemble file used by `grade`.
    pub ensemble_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LesionConfig {
    pub threshold: ThresholdMode,
    /// Per-kind overrides of `threshold`, keyed by kind code.
    pub per_kind: BTreeMap<LesionKind, ThresholdMode>,
    pub min_area: usize,
    /// Probability masks laid out as `<masks_dir>/<KIND>/<id>.pfmap`.
    pub masks_dir: Option<PathBuf>,
    /// Segmentation model scores as `<metadata_dir>/<KIND>.json`.
    pub metadata_dir: Option<PathBuf>,
}

impl Default for LesionConfig {
    fn default() -> Self {
        LesionConfig {
            threshold: ThresholdMode::default(),
            per_kind: BTreeMap::new(),
            min_area: DEFAULT_MIN_AREA,
            masks_dir: None,
            metadata_dir: None,
        }
    }
}

impl LesionConfig {
    pub fn threshold_for(&self, kind: LesionKind) -> ThresholdMode {
        self.per_kind.get(&kind).copied().unwrap_or(self.threshold)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustConfig {
    pub weights: TrustWeights,
    /// Best-quality image seen so far; quality is scored against it.
    pub reference_image: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskDirs {
    /// Optic-disc masks as `<disc_dir>/<id>.png`.
    pub disc_dir: Option<PathBuf>,
    /// Vessel masks as `<vessel_dir>/<id>.png`.
    pub vessel_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub preprocess: PreprocessParams,
    pub anatomy: MaskDirs,
    pub features: FeatureBackend,
    pub models: ModelConfig,
    pub lesions: LesionConfig,
    pub trust: TrustConfig,
    pub seed: u64,
}

impl PipelineConfig {
    /// Parses and validates a config document. Relative paths are taken
    /// relative to `base`.
    pub fn from_json(text: &str, origin: &str, base: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: PipelineConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: origin.to_string(),
            reason: format!("at `{}`: {}", e.path(), e.inner()),
        })?;
        cfg.resolve(base);
        cfg.validate().map_err(|e| Error::Config {
            path: origin.to_string(),
            reason: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, &path.display().to_string(), base)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.anatomy.disc_dir);
        fix(&mut self.anatomy.vessel_dir);
        fix(&mut self.models.ensemble_path);
        fix(&mut self.lesions.masks_dir);
        fix(&mut self.lesions.metadata_dir);
        fix(&mut self.trust.reference_image);
        self.features.resolve(base);
    }

    pub fn validate(&self) -> Result<()> {
        self.trust.weights.validate()?;
        self.models.hyperparams.validate()?;
        self.lesions.threshold.validate()?;
        for t in self.lesions.per_kind.values() {
            t.validate()?;
        }
        if let Some(c) = &self.preprocess.clahe {
            if !(c.clip_limit > 0.0) || c.tile_grid < 1 {
                return Err(Error::InvalidParameter {
                    name: "preprocess.clahe",
                    reason: "clip_limit must be positive and tile_grid at least 1".into(),
                });
            }
        }
        if let Some(r) = &self.preprocess.color_reference {
            if r.std.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::InvalidParameter {
                    name: "preprocess.color_reference.std",
                    reason: "every channel needs a positive standard deviation".into(),
                });
            }
        }
        if let Some(g) = &self.preprocess.gaussian {
            crate::preprocess::gaussian_kernel(g)?;
        }
        if self.preprocess.vessel_window < 3 || self.preprocess.vessel_window.is_multiple_of(2) {
            return Err(Error::InvalidParameter {
                name: "preprocess.vessel_window",
                reason: "must be odd and at least 3".into(),
            });
        }
        let mut paths: Vec<&Path> = self.features.paths();
        paths.extend(
            [
                &self.anatomy.disc_dir,
                &self.anatomy.vessel_dir,
                &self.models.ensemble_path,
                &self.lesions.masks_dir,
                &self.lesions.metadata_dir,
                &self.trust.reference_image,
            ]
            .into_iter()
            .flatten()
            .map(PathBuf::as_path),
        );
        for p in paths {
            if !p.exists() {
                return Err(Error::MissingFile { path: p.to_path_buf() });
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        let cfg = PipelineConfig::from_json("{}", "mem", Path::new(".")).unwrap();
        assert_eq!(cfg, PipelineConfig::default());
    }

    #[test]
    fn errors_carry_the_json_path() {
        let err = PipelineConfig::from_json(
            r#"{"preprocess": {"clahe": {"clip_limit": "high", "tile_grid": 8}}}"#,
            "cfg.json",
            Path::new("."),
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("preprocess.clahe.clip_limit"), "{err}");

        let err = PipelineConfig::from_json(r#"{"lesions": {"min_areas": 3}}"#, "cfg.json", Path::new("."))
            .unwrap_err()
            .to_string();
        assert!(err.contains("min_areas"), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        for doc in [
            r#"{"trust": {"weights": {"w_quality": 0.5, "w_f1": 0.5, "w_conf": 0.5}}}"#,
            r#"{"lesions": {"threshold": {"mode": "fixed", "value": 2.0}}}"#,
            r#"{"models": {"hyperparams": {"c": -1}}}"#,
            r#"{"preprocess": {"vessel_window": 4}}"#,
            r#"{"features": {"backend": "file", "path": "nope.csv"}}"#,
        ] {
            assert!(
                PipelineConfig::from_json(doc, "cfg", Path::new("/nonexistent")).is_err(),
                "{doc}"
            );
        }
    }

    #[test]
    fn paths_resolve_against_base() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("masks")).unwrap();
        std::fs::write(
            dir.path().join("cfg.json"),
            r#"{"lesions": {"masks_dir": "masks", "per_kind": {"MA": {"mode": "fixed", "value": 0.3}}}}"#,
        )
        .unwrap();
        let cfg = PipelineConfig::load(dir.path().join("cfg.json")).unwrap();
        assert_eq!(cfg.lesions.masks_dir, Some(dir.path().join("masks")));
        assert_eq!(
            cfg.lesions.threshold_for(LesionKind::Ma),
            ThresholdMode::Fixed { value: 0.3 }
        );
        assert_eq!(cfg.lesions.threshold_for(LesionKind::He), ThresholdMode::default());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed = 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }
}
