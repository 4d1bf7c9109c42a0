//! The six classical learners of the grading ensemble.
//!
//! Every model produces one score per class and predicts the arg-max,
//! with ties resolved toward the more severe class. Training expects
//! standardized features and at least one sample of each class.

mod bayes;
mod forest;
mod svm;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{severity_argmax, ClassLabel, FeatureDataset, FeatureVector};

pub use bayes::GaussianNb;
pub use forest::{Forest, Tree, TreeNode};
pub use svm::{CrammerSinger, Kernel, KernelOvr, LinearOvr};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    SvmLinear,
    SvmPoly,
    SvmRbf,
    SvmCrammerSinger,
    RandomForest,
    NaiveBayes,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::SvmLinear,
        ModelKind::SvmPoly,
        ModelKind::SvmRbf,
        ModelKind::SvmCrammerSinger,
        ModelKind::RandomForest,
        ModelKind::NaiveBayes,
    ];

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::SvmLinear => "SVM Linear Kernel",
            ModelKind::SvmPoly => "SVM Polynomial Kernel",
            ModelKind::SvmRbf => "SVM Radial Basis Kernel",
            ModelKind::SvmCrammerSinger => "SVM Crammer-Singer",
            ModelKind::RandomForest => "Random Forest",
            ModelKind::NaiveBayes => "Naive Bayes",
        }
    }

    /// Stable snake-case name used for model file names.
    pub fn file_stem(self) -> &'static str {
        match self {
            ModelKind::SvmLinear => "svm_linear",
            ModelKind::SvmPoly => "svm_poly",
            ModelKind::SvmRbf => "svm_rbf",
            ModelKind::SvmCrammerSinger => "svm_crammer_singer",
            ModelKind::RandomForest => "random_forest",
            ModelKind::NaiveBayes => "naive_bayes",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// SVM regularization; the penalty weight is `1 / (c * n)`.
    pub c: f64,
    pub poly_degree: u32,
    /// Additive constant of the polynomial kernel.
    pub poly_bias: f64,
    /// RBF width; `None` means `1 / d`.
    pub gamma: Option<f64>,
    pub n_trees: usize,
    pub max_depth: usize,
    pub bootstrap: bool,
    pub epochs: usize,
    /// Initial SGD step, decayed as `lr / (1 + t / n)` at step `t`.
    pub learning_rate: f64,
    /// Maximum support vectors kept per one-vs-rest kernel machine.
    pub support_budget: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            c: 1.0,
            poly_degree: 3,
            poly_bias: 1.0,
            gamma: None,
            n_trees: 100,
            max_depth: 16,
            bootstrap: true,
            epochs: 30,
            learning_rate: 1e-3,
            support_budget: 2000,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &'static str, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.into(),
            })
        };
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad("c", "must be positive");
        }
        if self.poly_degree < 1 {
            return bad("poly_degree", "must be at least 1");
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return bad("gamma", "must be positive");
            }
        }
        if self.n_trees < 1 {
            return bad("n_trees", "must be at least 1");
        }
        if self.max_depth < 1 {
            return bad("max_depth", "must be at least 1");
        }
        if self.epochs < 1 {
            return bad("epochs", "must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if self.support_budget < 1 {
            return bad("support_budget", "must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Parameters {
    Linear(LinearOvr),
    Kernel(KernelOvr),
    CrammerSinger(CrammerSinger),
    Forest(Forest),
    NaiveBayes(GaussianNb),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub parameters: Parameters,
}

impl TrainedModel {
    pub fn dim(&self) -> usize {
        match &self.parameters {
            Parameters::Linear(m) => m.dim(),
            Parameters::Kernel(m) => m.dim(),
            Parameters::CrammerSinger(m) => m.dim(),
            Parameters::Forest(m) => m.dim(),
            Parameters::NaiveBayes(m) => m.dim(),
        }
    }

    /// Raw per-class scores; larger is more likely.
    pub fn scores(&self, x: &[f64]) -> Result<[f64; 3]> {
        if x.len() != self.dim() {
            return Err(Error::FeatureDimension {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(match &self.parameters {
            Parameters::Linear(m) => m.scores(x),
            Parameters::Kernel(m) => m.scores(x),
            Parameters::CrammerSinger(m) => m.scores(x),
            Parameters::Forest(m) => m.scores(x),
            Parameters::NaiveBayes(m) => m.log_joint(x),
        })
    }

    pub fn predict_values(&self, x: &[f64]) -> Result<ClassLabel> {
        Ok(severity_argmax(&self.scores(x)?))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub(crate) fn check_training_set(ds: &FeatureDataset) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let counts = ds.class_counts();
    for class in ClassLabel::ALL {
        if counts[class.index()] == 0 {
            return Err(Error::MissingClass(class.name()));
        }
    }
    Ok(())
}

/// Fit one model; identical inputs and seed give identical parameters.
pub fn train(kind: ModelKind, ds: &FeatureDataset, hp: &Hyperparams, seed: u64) -> Result<TrainedModel> {
    hp.validate()?;
    check_training_set(ds)?;
    let parameters = match kind {
        ModelKind::SvmLinear => Parameters::Linear(LinearOvr::fit(ds, hp, seed).0),
        ModelKind::SvmPoly => Parameters::Kernel(KernelOvr::fit(
            ds,
            hp,
            Kernel::Poly {
                degree: hp.poly_degree,
                bias: hp.poly_bias,
            },
            seed,
        )),
        ModelKind::SvmRbf => Parameters::Kernel(KernelOvr::fit(
            ds,
            hp,
            Kernel::Rbf {
                gamma: hp.gamma.unwrap_or(1.0 / ds.dim().max(1) as f64),
            },
            seed,
        )),
        ModelKind::SvmCrammerSinger => Parameters::CrammerSinger(CrammerSinger::fit(ds, hp, seed)),
        ModelKind::RandomForest => Parameters::Forest(Forest::fit(ds, hp, seed)),
        ModelKind::NaiveBayes => Parameters::NaiveBayes(GaussianNb::fit(ds)),
    };
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        kind,
        hyperparams: hp.clone(),
        seed,
        parameters,
    })
}

/// Linear one-vs-rest SVM plus its mean training hinge loss after every epoch.
pub fn train_linear_with_history(ds: &FeatureDataset, hp: &Hyperparams, seed: u64) -> Result<(TrainedModel, Vec<f64>)> {
    hp.validate()?;
    check_training_set(ds)?;
    let (m, history) = LinearOvr::fit(ds, hp, seed);
    Ok((
        TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            kind: ModelKind::SvmLinear,
            hyperparams: hp.clone(),
            seed,
            parameters: Parameters::Linear(m),
        },
        history,
    ))
}

pub fn predict(model: &TrainedModel, x: &FeatureVector) -> Result<ClassLabel> {
    model.predict_values(&x.values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub accuracy: f64,
    /// Accuracy over samples of each true class; `None` when the class is absent.
    pub per_class: [Option<f64>; 3],
}

pub fn validate(model: &TrainedModel, ds: &FeatureDataset) -> Result<Validation> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = [0usize; 3];
    let mut total = [0usize; 3];
    for (x, label) in ds.rows() {
        let pred = model.predict_values(x)?;
        total[label.index()] += 1;
        if pred == label {
            correct[label.index()] += 1;
        }
    }
    let per_class = [0, 1, 2].map(|c| (total[c] > 0).then(|| correct[c] as f64 / total[c] as f64));
    Ok(Validation {
        accuracy: correct.iter().sum::<usize>() as f64 / ds.len() as f64,
        per_class,
    })
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model.to_json()?).map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

pub(crate) fn check_version(bytes: &[u8], path: &Path, supported: u32) -> Result<()> {
    let probe: VersionProbe = serde_json::from_slice(bytes).map_err(|e| Error::CorruptPayload {
        path: path.into(),
        reason: e.to_string(),
    })?;
    if probe.format_version > supported {
        return Err(Error::VersionMismatch {
            path: path.into(),
            found: probe.format_version,
            supported,
        });
    }
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    check_version(&bytes, path, MODEL_FORMAT_VERSION)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::CorruptPayload {
        path: path.into(),
        reason: e.to_string(),
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
