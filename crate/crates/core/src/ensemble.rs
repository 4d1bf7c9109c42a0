//! Weighted hard voting over trained classifiers.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifiers::{self, check_version, Hyperparams, ModelKind, TrainedModel};
use crate::error::{Error, Result};
use crate::features::{severity_argmax, ClassLabel, FeatureDataset, FeatureVector, Scaler};
use crate::rng::SeededRng;

pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightBasis {
    OverallAccuracy,
    #[default]
    PerClassAccuracy,
}

/// Members plus their vote weights. Each member carries one weight per
/// candidate class; under the overall basis the three entries are equal.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub members: Vec<TrainedModel>,
    pub weights: Vec<[f64; 3]>,
    pub weight_basis: WeightBasis,
    /// Applied to raw feature vectors before members see them.
    pub scaler: Option<Scaler>,
}

impl EnsembleModel {
    pub fn new(members: Vec<TrainedModel>, weights: Vec<[f64; 3]>, weight_basis: WeightBasis) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if weights.len() != members.len() {
            return Err(Error::InvalidWeights(format!(
                "{} weights for {} members",
                weights.len(),
                members.len()
            )));
        }
        if weights.iter().flatten().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidWeights("weights must be finite and non-negative".into()));
        }
        if !weights.iter().flatten().any(|&w| w > 0.0) {
            return Err(Error::InvalidWeights("at least one weight must be positive".into()));
        }
        let dim = members[0].dim();
        if let Some(m) = members.iter().find(|m| m.dim() != dim) {
            return Err(Error::FeatureDimension {
                expected: dim,
                found: m.dim(),
            });
        }
        Ok(EnsembleModel {
            members,
            weights,
            weight_basis,
            scaler: None,
        })
    }

    pub fn with_scaler(mut self, scaler: Scaler) -> Result<Self> {
        if scaler.dim() != self.dim() {
            return Err(Error::FeatureDimension {
                expected: self.dim(),
                found: scaler.dim(),
            });
        }
        self.scaler = Some(scaler);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.members[0].dim()
    }

    /// Votes on values already in the members' feature space.
    pub fn vote_values(&self, x: &[f64]) -> Result<(ClassLabel, [f64; 3])> {
        let mut score = [0.0; 3];
        for (m, w) in self.members.iter().zip(&self.weights) {
            let c = m.predict_values(x)?.index();
            score[c] += w[c];
        }
        Ok((severity_argmax(&score), score))
    }
}

/// Weighs each member by its accuracy on `val`, which must be in the
/// members' feature space. Under the per-class basis a class missing from
/// `val` falls back to the member's overall accuracy.
pub fn fit_weights(members: Vec<TrainedModel>, val: &FeatureDataset, basis: WeightBasis) -> Result<EnsembleModel> {
    if members.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let weights = members
        .iter()
        .map(|m| {
            let v = classifiers::validate(m, val)?;
            Ok(match basis {
                WeightBasis::OverallAccuracy => [v.accuracy; 3],
                WeightBasis::PerClassAccuracy => v.per_class.map(|a| a.unwrap_or(v.accuracy)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EnsembleModel::new(members, weights, basis)
}

/// Weighted vote on a raw feature vector.
pub fn vote(ens: &EnsembleModel, x: &FeatureVector) -> Result<(ClassLabel, [f64; 3])> {
    match &ens.scaler {
        Some(s) => {
            if x.dim() != s.dim() {
                return Err(Error::FeatureDimension {
                    expected: s.dim(),
                    found: x.dim(),
                });
            }
            ens.vote_values(&s.transform(&x.values))
        }
        None => ens.vote_values(&x.values),
    }
}

/// Trains the six classifiers concurrently, one thread each. Member seeds
/// are derived from `seed` so results do not depend on scheduling.
pub fn train_all(ds: &FeatureDataset, hp: &Hyperparams, seed: u64) -> Result<Vec<TrainedModel>> {
    let mut master = SeededRng::new(seed);
    let seeds: Vec<u64> = ModelKind::ALL.iter().map(|_| master.next_u64()).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = ModelKind::ALL
            .iter()
            .zip(&seeds)
            .map(|(&kind, &seed)| s.spawn(move || classifiers::train(kind, ds, hp, seed)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct EnsembleFile {
    format_version: u32,
    /// Relative paths are resolved against the ensemble file's directory.
    member_paths: Vec<PathBuf>,
    weights: Vec<[f64; 3]>,
    weight_basis: WeightBasis,
    #[serde(default)]
    scaler: Option<Scaler>,
}

/// Writes each member as `<stem>.json` next to `path`, then the ensemble
/// file itself. Returns the member file paths.
pub fn save_ensemble(ens: &EnsembleModel, path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut names = Vec::with_capacity(ens.members.len());
    for (i, m) in ens.members.iter().enumerate() {
        let taken = ens.members[..i].iter().filter(|o| o.kind == m.kind).count();
        let name = match taken {
            0 => format!("{}.json", m.kind.file_stem()),
            k => format!("{}_{k}.json", m.kind.file_stem()),
        };
        classifiers::save_model(m, dir.join(&name))?;
        names.push(PathBuf::from(name));
    }
    let file = EnsembleFile {
        format_version: ENSEMBLE_FORMAT_VERSION,
        member_paths: names.clone(),
        weights: ens.weights.clone(),
        weight_basis: ens.weight_basis,
        scaler: ens.scaler.clone(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?).map_err(|e| Error::io(path, e))?;
    Ok(names.into_iter().map(|n| dir.join(n)).collect())
}

pub fn load_ensemble(path: impl AsRef<Path>) -> Result<EnsembleModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    check_version(&bytes, path, ENSEMBLE_FORMAT_VERSION)?;
    let file: EnsembleFile = serde_json::from_slice(&bytes).map_err(|e| Error::CorruptPayload {
        path: path.into(),
        reason: e.to_string(),
    })?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let members = file
        .member_paths
        .iter()
        .map(|p| classifiers::load_model(dir.join(p)))
        .collect::<Result<Vec<_>>>()?;
    let ens = EnsembleModel::new(members, file.weights, file.weight_basis)?;
    match file.scaler {
        Some(s) => ens.with_scaler(s),
        None => Ok(ens),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{LinearOvr, Parameters, MODEL_FORMAT_VERSION};
    use proptest::prelude::*;

    /// A 1-d model that always predicts `class`.
    fn constant(class: ClassLabel) -> TrainedModel {
        let mut bias = [0.0; 3];
        bias[class.index()] = 1.0;
        TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            kind: ModelKind::SvmLinear,
            hyperparams: Hyperparams::default(),
            seed: 0,
            parameters: Parameters::Linear(LinearOvr {
                weights: vec![vec![0.0]; 3],
                bias,
            }),
        }
    }

    /// Predicts NoDr for x < 0 and SevereDr otherwise, or the reverse.
    fn sign_model(flip: bool) -> TrainedModel {
        let s = if flip { -1.0 } else { 1.0 };
        TrainedModel {
            parameters: Parameters::Linear(LinearOvr {
                weights: vec![vec![-s], vec![0.0], vec![s]],
                bias: [0.0, -100.0, 0.0],
            }),
            ..constant(ClassLabel::NoDr)
        }
    }

    fn fv(x: f64) -> FeatureVector {
        FeatureVector::new("x", vec![x]).unwrap()
    }

    fn uniform(members: Vec<TrainedModel>, w: &[f64]) -> EnsembleModel {
        let weights = w.iter().map(|&v| [v; 3]).collect();
        EnsembleModel::new(members, weights, WeightBasis::OverallAccuracy).unwrap()
    }

    #[test]
    fn hand_sum_example() {
        use ClassLabel::*;
        let ens = uniform(
            vec![constant(NoDr), constant(MildDr), constant(MildDr)],
            &[0.5, 0.3, 0.3],
        );
        let (label, score) = vote(&ens, &fv(0.0)).unwrap();
        assert_eq!(label, MildDr);
        assert_eq!(score[0], 0.5);
        assert!((score[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn exact_tie_prefers_severity() {
        use ClassLabel::*;
        let ens = uniform(vec![constant(NoDr), constant(SevereDr)], &[0.4, 0.4]);
        assert_eq!(vote(&ens, &fv(0.0)).unwrap().0, SevereDr);
        let ens = uniform(vec![constant(MildDr), constant(NoDr)], &[0.25, 0.25]);
        assert_eq!(vote(&ens, &fv(0.0)).unwrap().0, MildDr);
    }

    #[test]
    fn dominant_member_wins_disagreements() {
        // sign_model(false) and sign_model(true) disagree everywhere but 0
        let ds = FeatureDataset::new(
            (0..10)
                .flat_map(|i| [fv(i as f64 + 1.0), fv(-(i as f64) - 1.0)])
                .collect(),
            (0..10)
                .flat_map(|i| {
                    // the first model is right on 9 of 10 pairs
                    if i == 0 {
                        [ClassLabel::NoDr, ClassLabel::SevereDr]
                    } else {
                        [ClassLabel::SevereDr, ClassLabel::NoDr]
                    }
                })
                .collect(),
        )
        .unwrap();
        let ens = fit_weights(
            vec![sign_model(false), sign_model(true)],
            &ds,
            WeightBasis::OverallAccuracy,
        )
        .unwrap();
        assert_eq!(ens.weights, vec![[0.9; 3], [0.1; 3]]);
        for k in -50..=50 {
            let x = k as f64 * 0.37 + 0.01;
            let first = ens.members[0].predict_values(&[x]).unwrap();
            assert_eq!(vote(&ens, &fv(x)).unwrap().0, first);
        }
    }

    #[test]
    fn single_member_mirrors_member() {
        let ds = FeatureDataset::new(
            vec![fv(-1.0), fv(1.0), fv(2.0)],
            vec![ClassLabel::NoDr, ClassLabel::SevereDr, ClassLabel::MildDr],
        )
        .unwrap();
        let m = sign_model(false);
        let ens = fit_weights(vec![m.clone()], &ds, WeightBasis::PerClassAccuracy).unwrap();
        for k in -100..100 {
            let x = k as f64 * 0.1;
            assert_eq!(vote(&ens, &fv(x)).unwrap().0, m.predict_values(&[x]).unwrap());
        }
    }

    #[test]
    fn per_class_weights_from_accuracy_rows() {
        // members whose per-class validation accuracy reproduces a published
        // row: 95.34 / 89.01 / 75.95 percent on 10 000 samples per class
        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        for (c, correct) in [(0usize, 9534), (1, 8901), (2, 7595)] {
            for i in 0..10_000 {
                // x encodes the class the member will predict
                let predicted = if i < correct { c } else { (c + 1) % 3 };
                vectors.push(fv(predicted as f64));
                labels.push(ClassLabel::ALL[c]);
            }
        }
        let ds = FeatureDataset::new(vectors, labels).unwrap();
        // piecewise model: x=0 -> NoDr, x=1 -> MildDr, x=2 -> SevereDr
        let m = TrainedModel {
            parameters: Parameters::Linear(LinearOvr {
                weights: vec![vec![-10.0], vec![0.0], vec![10.0]],
                bias: [5.0, 0.0, -15.0],
            }),
            ..constant(ClassLabel::NoDr)
        };
        let ens = fit_weights(vec![m], &ds, WeightBasis::PerClassAccuracy).unwrap();
        assert_eq!(ens.weights[0], [0.9534, 0.8901, 0.7595]);
        let (label, score) = vote(&ens, &fv(2.0)).unwrap();
        assert_eq!(label, ClassLabel::SevereDr);
        assert_eq!(score, [0.0, 0.0, 0.7595]);
    }

    #[test]
    fn invariant_violations_rejected() {
        let m = constant(ClassLabel::NoDr);
        assert!(matches!(
            fit_weights(
                vec![],
                &FeatureDataset::new(vec![fv(0.0)], vec![ClassLabel::NoDr]).unwrap(),
                WeightBasis::default()
            ),
            Err(Error::EmptyEnsemble)
        ));
        let bad = |w: Vec<[f64; 3]>| EnsembleModel::new(vec![m.clone()], w, WeightBasis::PerClassAccuracy);
        assert!(matches!(bad(vec![[0.0; 3]]), Err(Error::InvalidWeights(_))));
        assert!(matches!(bad(vec![[-1.0, 1.0, 1.0]]), Err(Error::InvalidWeights(_))));
        assert!(matches!(bad(vec![[1.0; 3], [1.0; 3]]), Err(Error::InvalidWeights(_))));
        assert!(matches!(bad(vec![[f64::NAN, 1.0, 1.0]]), Err(Error::InvalidWeights(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ens = uniform(
            vec![sign_model(false), sign_model(true), constant(ClassLabel::MildDr)],
            &[0.7, 0.2, 0.45],
        )
        .with_scaler(Scaler {
            mean: vec![0.5],
            std: vec![2.0],
        })
        .unwrap();
        let p = dir.path().join("ensemble.json");
        let members = save_ensemble(&ens, &p).unwrap();
        assert_eq!(members.len(), 3);
        assert!(members[1].ends_with("svm_linear_1.json"));
        let back = load_ensemble(&p).unwrap();
        assert_eq!(back, ens);
    }

    fn arb_votes() -> impl Strategy<Value = (Vec<ClassLabel>, Vec<[f64; 3]>)> {
        (1usize..7).prop_flat_map(|n| {
            (
                proptest::collection::vec((0usize..3).prop_map(|i| ClassLabel::ALL[i]), n),
                proptest::collection::vec(proptest::array::uniform3(0.01f64..1.0), n),
            )
        })
    }

    fn build(labels: &[ClassLabel], weights: Vec<[f64; 3]>) -> EnsembleModel {
        let members = labels.iter().map(|&l| constant(l)).collect();
        EnsembleModel::new(members, weights, WeightBasis::PerClassAccuracy).unwrap()
    }

    proptest! {
        #[test]
        fn rescaling_keeps_winner((labels, weights) in arb_votes(), lambda in 0.001f64..1000.0) {
            let a = build(&labels, weights.clone());
            let b = build(&labels, weights.iter().map(|w| w.map(|v| v * lambda)).collect());
            prop_assert_eq!(vote(&a, &fv(0.0)).unwrap().0, vote(&b, &fv(0.0)).unwrap().0);
        }

        #[test]
        fn unanimity(c in 0usize..3, weights in proptest::collection::vec(proptest::array::uniform3(0.01f64..1.0), 1..7)) {
            let labels = vec![ClassLabel::ALL[c]; weights.len()];
            prop_assert_eq!(vote(&build(&labels, weights), &fv(0.0)).unwrap().0, ClassLabel::ALL[c]);
        }

        #[test]
        fn boosting_a_member_never_flips_against_it(
            (labels, weights) in arb_votes(),
            pick in any::<proptest::sample::Index>(),
            boost in 1.0f64..10.0,
        ) {
            let i = pick.index(labels.len());
            let before = vote(&build(&labels, weights.clone()), &fv(0.0)).unwrap().0;
            let mut boosted = weights.clone();
            boosted[i] = boosted[i].map(|v| v * boost);
            let after = vote(&build(&labels, boosted), &fv(0.0)).unwrap().0;
            prop_assert!(after == before || after == labels[i]);
        }
    }
}
