//! Segmentation trust and agreement metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::hash::Hash;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{same_dims, BinaryMask, GrayImage, ProbMask};
use crate::lesions::LesionKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustWeights {
    pub w_quality: f64,
    pub w_f1: f64,
    pub w_conf: f64,
}

impl Default for TrustWeights {
    fn default() -> Self {
        TrustWeights {
            w_quality: 0.4,
            w_f1: 0.3,
            w_conf: 0.3,
        }
    }
}

impl TrustWeights {
    pub fn new(w_quality: f64, w_f1: f64, w_conf: f64) -> Result<Self> {
        let w = TrustWeights {
            w_quality,
            w_f1,
            w_conf,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ws = [self.w_quality, self.w_f1, self.w_conf];
        if ws.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidTrustWeights(format!(
                "{ws:?} has a negative or non-finite entry"
            )));
        }
        let sum: f64 = ws.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidTrustWeights(format!("{ws:?} sums to {sum}, not 1")));
        }
        Ok(())
    }
}

fn binary_entropy(p: f64) -> f64 {
    let h = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
    h(p) + h(1.0 - p)
}

/// One minus the mean per-pixel binary entropy, in bits.
pub fn entropy_confidence(p: &ProbMask) -> f64 {
    let data = p.data();
    let mean = data.iter().map(|&v| binary_entropy(v as f64)).sum::<f64>() / data.len() as f64;
    (1.0 - mean).clamp(0.0, 1.0)
}

/// Side length both images are resampled to before comparison.
pub const QUALITY_SIZE: usize = 512;

/// Mean squared difference of two equal-length sequences in [0, 1].
pub fn mse_unit(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// MSE against a reference at native resolution, with the quality score
/// `1 - min(mse, 1)`.
pub fn mse_between(img: &GrayImage, reference: &GrayImage) -> Result<(f64, f64)> {
    if img.dims() != reference.dims() {
        return Err(Error::DimensionMismatch {
            left: img.dims(),
            right: reference.dims(),
        });
    }
    let unit = |g: &GrayImage| g.data().iter().map(|&v| v as f64 / 255.0).collect::<Vec<_>>();
    let mse = mse_unit(&unit(img), &unit(reference));
    Ok((mse, 1.0 - mse.min(1.0)))
}

/// Both images are resized to `QUALITY_SIZE` square by nearest neighbour,
/// then compared with [`mse_between`].
pub fn mse_quality(img: &GrayImage, reference: &GrayImage) -> Result<(f64, f64)> {
    let a = img.resize_nearest(QUALITY_SIZE, QUALITY_SIZE)?;
    let b = reference.resize_nearest(QUALITY_SIZE, QUALITY_SIZE)?;
    mse_between(&a, &b)
}

fn overlap(pred: &BinaryMask, truth: &BinaryMask) -> Result<(usize, usize, usize)> {
    same_dims(pred.dims(), truth.dims())?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Ok((tp, fp, fn_))
}

/// `2TP / (2TP + FP + FN)`; 1 when both masks are empty.
pub fn f1_score(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64> {
    let (tp, fp, fn_) = overlap(pred, truth)?;
    let den = 2 * tp + fp + fn_;
    Ok(if den == 0 { 1.0 } else { (2 * tp) as f64 / den as f64 })
}

/// Intersection over union; 1 when both masks are empty.
pub fn iou(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64> {
    let (tp, fp, fn_) = overlap(pred, truth)?;
    let union = tp + fp + fn_;
    Ok(if union == 0 { 1.0 } else { tp as f64 / union as f64 })
}

/// Weighted average of the three scores as a whole percentage.
pub fn weighted_trust(quality: f64, f1: f64, confidence: f64, w: &TrustWeights) -> Result<u32> {
    w.validate()?;
    for (name, v) in [("quality", quality), ("f1", f1), ("confidence", confidence)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter {
                name,
                reason: format!("{v} is outside [0, 1]"),
            });
        }
    }
    let pct = 100.0 * (w.w_quality * quality + w.w_f1 * f1 + w.w_conf * confidence);
    Ok(pct.round().clamp(0.0, 100.0) as u32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub kappa: f64,
    pub p_o: f64,
    pub p_e: f64,
    pub band: String,
}

pub fn kappa_band(k: f64) -> &'static str {
    if k < 0.0 {
        "The agreement is weaker than by chance"
    } else if k == 0.0 {
        "Agreement equals chance"
    } else if k < 0.2 {
        "Weak agreement"
    } else if k < 0.4 {
        "Moderate agreement"
    } else if k < 0.6 {
        "Medium agreement"
    } else if k < 0.8 {
        "Significant agreement"
    } else {
        "Almost perfect match"
    }
}

/// Cohen's kappa between two raters. When chance agreement is certain
/// (both raters constant and identical) kappa is defined as 1.
pub fn cohen_kappa<T: Eq + Hash + Ord>(a: &[T], b: &[T]) -> Result<Kappa> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count();
    let mut counts: BTreeMap<&T, (usize, usize)> = BTreeMap::new();
    for x in a {
        counts.entry(x).or_default().0 += 1;
    }
    for y in b {
        counts.entry(y).or_default().1 += 1;
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = counts.values().map(|&(ca, cb)| (ca as f64 / n) * (cb as f64 / n)).sum();
    let kappa = if p_e >= 1.0 { 1.0 } else { (p_o - p_e) / (1.0 - p_e) };
    Ok(Kappa {
        kappa,
        p_o,
        p_e,
        band: kappa_band(kappa).to_string(),
    })
}

/// Validation scores of a lesion segmentation model, stored beside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationMeta {
    pub lesion_kind: LesionKind,
    pub f1: f64,
    #[serde(default)]
    pub iou: Option<f64>,
}

pub fn load_segmentation_meta(path: impl AsRef<Path>) -> Result<SegmentationMeta> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let meta: SegmentationMeta = serde_json::from_slice(&bytes).map_err(|e| Error::CorruptPayload {
        path: path.into(),
        reason: e.to_string(),
    })?;
    for (name, v) in [("f1", Some(meta.f1)), ("iou", meta.iou)] {
        if let Some(v) = v {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::CorruptPayload {
                    path: path.into(),
                    reason: format!("{name} = {v} is outside [0, 1]"),
                });
            }
        }
    }
    Ok(meta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionTrust {
    pub kind: LesionKind,
    pub confidence: f64,
    pub quality: f64,
    pub f1: f64,
    pub iou: f64,
    pub trust_pct: u32,
}

impl LesionTrust {
    pub fn compute(
        kind: LesionKind,
        confidence: f64,
        quality: f64,
        f1: f64,
        iou: f64,
        w: &TrustWeights,
    ) -> Result<Self> {
        Ok(LesionTrust {
            kind,
            confidence,
            quality,
            f1,
            iou,
            trust_pct: weighted_trust(quality, f1, confidence, w)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustReport {
    pub weights: TrustWeights,
    pub lesions: Vec<LesionTrust>,
}

impl TrustReport {
    /// Lesion-per-column table of confidence, IoU and trust.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<12}", "Lesion");
        for l in &self.lesions {
            let _ = write!(out, "{:>7}", l.kind.code());
        }
        out.push('\n');
        let row = |out: &mut String, name: &str, f: &dyn Fn(&LesionTrust) -> String| {
            let _ = write!(out, "{name:<12}");
            for l in &self.lesions {
                let _ = write!(out, "{:>7}", f(l));
            }
            out.push('\n');
        };
        row(&mut out, "Confidence", &|l| format!("{:.2}", l.confidence));
        row(&mut out, "IoU score", &|l| format!("{:.2}", l.iou));
        row(&mut out, "Trust", &|l| format!("{}%", l.trust_pct));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn pm(data: Vec<f32>) -> ProbMask {
        let n = data.len();
        ProbMask::new(n, 1, data).unwrap()
    }

    fn bm(bits: &[u8]) -> BinaryMask {
        BinaryMask::new(bits.len(), 1, bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn weights() {
        assert!(TrustWeights::default().validate().is_ok());
        assert!(TrustWeights::new(0.5, 0.5, 0.1).is_err());
        assert!(TrustWeights::new(1.2, -0.1, -0.1).is_err());
        assert!(TrustWeights::new(1.0, 0.0, 0.0).is_ok());
    }

    #[test]
    fn entropy_cases() {
        assert_eq!(entropy_confidence(&pm(vec![0.0, 1.0, 1.0, 0.0])), 1.0);
        assert_eq!(entropy_confidence(&pm(vec![0.5; 9])), 0.0);
        assert_eq!(entropy_confidence(&pm(vec![0.5, 1.0, 0.5, 1.0])), 0.5);
    }

    #[test]
    fn mse_cases() {
        let g = |v: Vec<u8>| GrayImage::new(v.len(), 1, v).unwrap();
        assert_eq!(
            mse_between(&g(vec![3, 90, 200]), &g(vec![3, 90, 200])).unwrap(),
            (0.0, 1.0)
        );
        assert_eq!(mse_between(&g(vec![0; 4]), &g(vec![255; 4])).unwrap(), (1.0, 0.0));
        assert_eq!(mse_unit(&[0.0, 0.5, 0.2, 0.2], &[0.5, 0.0, 0.2, 0.2]), 0.125);
        assert!(matches!(
            mse_between(&g(vec![0; 4]), &g(vec![0; 3])),
            Err(Error::DimensionMismatch { .. })
        ));
        // resampling makes differently sized images comparable
        let big = GrayImage::new(40, 30, vec![255; 1200]).unwrap();
        let small = GrayImage::new(7, 9, vec![255; 63]).unwrap();
        assert_eq!(mse_quality(&big, &small).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn overlap_metrics() {
        let a = bm(&[1, 1, 1, 1, 0, 0, 0, 0]);
        assert_eq!(f1_score(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let b = bm(&[0, 0, 0, 0, 1, 1, 1, 1]);
        assert_eq!(f1_score(&a, &b).unwrap(), 0.0);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
        let half = bm(&[1, 1, 0, 0, 0, 0, 0, 0]);
        assert_eq!(f1_score(&half, &a).unwrap(), 2.0 / 3.0);
        let shifted = bm(&[0, 0, 1, 1, 1, 1, 0, 0]);
        assert_eq!(iou(&shifted, &a).unwrap(), 1.0 / 3.0);
        let none = bm(&[0; 8]);
        assert_eq!(f1_score(&none, &none).unwrap(), 1.0);
        assert_eq!(iou(&none, &none).unwrap(), 1.0);
        assert!(iou(&a, &bm(&[0; 3])).is_err());
    }

    #[test]
    fn trust_values() {
        let w = TrustWeights::default();
        assert_eq!(weighted_trust(1.0, 1.0, 1.0, &w).unwrap(), 100);
        assert_eq!(weighted_trust(0.0, 0.0, 0.0, &w).unwrap(), 0);
        assert_eq!(weighted_trust(0.95, 0.97, 0.91, &w).unwrap(), 94);
        assert!(weighted_trust(1.1, 0.0, 0.0, &w).is_err());
    }

    /// 400 binary labels: each rater says yes 200 times, and they agree on
    /// 346 items, so chance agreement is 1/2 and observed 0.865.
    fn kappa_fixture() -> (Vec<u8>, Vec<u8>) {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (x, y, n) in [(1, 1, 173), (0, 0, 173), (1, 0, 27), (0, 1, 27)] {
            a.extend(std::iter::repeat_n(x, n));
            b.extend(std::iter::repeat_n(y, n));
        }
        (a, b)
    }

    #[test]
    fn kappa_cases() {
        let (a, b) = kappa_fixture();
        let k = cohen_kappa(&a, &b).unwrap();
        assert_eq!((k.p_o, k.p_e), (0.865, 0.5));
        assert!((k.kappa - 0.73).abs() <= 1e-12);
        assert_eq!(k.band, "Significant agreement");

        let seq = [0, 1, 2, 1, 0];
        assert_eq!(cohen_kappa(&seq, &seq).unwrap().kappa, 1.0);
        assert_eq!(cohen_kappa(&[4, 4, 4], &[4, 4, 4]).unwrap().kappa, 1.0);
        assert!(matches!(cohen_kappa(&[1], &[1, 2]), Err(Error::LengthMismatch(1, 2))));
        assert!(matches!(cohen_kappa::<u8>(&[], &[]), Err(Error::EmptyDataset)));

        let mut rng = SeededRng::new(77);
        let a: Vec<usize> = (0..10_000).map(|_| rng.below(3)).collect();
        let b: Vec<usize> = (0..10_000).map(|_| rng.below(3)).collect();
        assert!(cohen_kappa(&a, &b).unwrap().kappa.abs() < 0.05);
    }

    #[test]
    fn bands() {
        assert_eq!(kappa_band(-0.1), "The agreement is weaker than by chance");
        assert_eq!(kappa_band(0.0), "Agreement equals chance");
        assert_eq!(kappa_band(0.1), "Weak agreement");
        assert_eq!(kappa_band(0.2), "Moderate agreement");
        assert_eq!(kappa_band(0.4), "Medium agreement");
        assert_eq!(kappa_band(0.6), "Significant agreement");
        assert_eq!(kappa_band(0.8), "Almost perfect match");
        assert_eq!(kappa_band(1.0), "Almost perfect match");
    }

    #[test]
    fn table_rendering() {
        let w = TrustWeights::default();
        let lesions = [
            (LesionKind::Hem, 0.94, 0.85, 87),
            (LesionKind::Se, 0.89, 0.92, 90),
            (LesionKind::He, 0.91, 0.97, 93),
            (LesionKind::Ma, 0.60, 0.77, 76),
        ]
        .map(|(kind, confidence, iou, trust_pct)| LesionTrust {
            kind,
            confidence,
            quality: 0.0,
            f1: 0.0,
            iou,
            trust_pct,
        });
        let report = TrustReport {
            weights: w,
            lesions: lesions.to_vec(),
        };
        let table = report.render_table();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(
            lines[0].split_whitespace().collect::<Vec<_>>(),
            ["Lesion", "HEM", "SE", "HE", "MA"]
        );
        assert_eq!(
            lines[1].split_whitespace().collect::<Vec<_>>(),
            ["Confidence", "0.94", "0.89", "0.91", "0.60"]
        );
        assert_eq!(
            lines[2].split_whitespace().collect::<Vec<_>>(),
            ["IoU", "score", "0.85", "0.92", "0.97", "0.77"]
        );
        assert_eq!(
            lines[3].split_whitespace().collect::<Vec<_>>(),
            ["Trust", "87%", "90%", "93%", "76%"]
        );
    }

    #[test]
    fn meta_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("he.json");
        std::fs::write(&p, r#"{"lesion_kind":"HE","f1":0.91,"iou":0.97}"#).unwrap();
        let m = load_segmentation_meta(&p).unwrap();
        assert_eq!((m.lesion_kind, m.f1, m.iou), (LesionKind::He, 0.91, Some(0.97)));
        std::fs::write(&p, r#"{"lesion_kind":"HE","f1":1.5}"#).unwrap();
        assert!(matches!(load_segmentation_meta(&p), Err(Error::CorruptPayload { .. })));
    }

    fn arb_pair() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
        (1usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec(any::<bool>(), n),
                proptest::collection::vec(any::<bool>(), n),
            )
                .prop_map(move |(a, b)| (BinaryMask::new(n, 1, a).unwrap(), BinaryMask::new(n, 1, b).unwrap()))
        })
    }

    proptest! {
        #[test]
        fn entropy_symmetric(data in proptest::collection::vec(0.0f32..=1.0, 1..50)) {
            let flipped: Vec<f32> = data.iter().map(|p| 1.0 - p).collect();
            let a = entropy_confidence(&pm(data));
            let b = entropy_confidence(&pm(flipped));
            prop_assert!((a - b).abs() <= 1e-6, "{} vs {}", a, b);
        }

        #[test]
        fn iou_at_most_f1((a, b) in arb_pair()) {
            prop_assert!(iou(&a, &b).unwrap() <= f1_score(&a, &b).unwrap());
            prop_assert_eq!(iou(&a, &b).unwrap(), iou(&b, &a).unwrap());
            prop_assert_eq!(f1_score(&a, &b).unwrap(), f1_score(&b, &a).unwrap());
        }

        #[test]
        fn kappa_symmetric(pairs in proptest::collection::vec((0u8..4, 0u8..4), 1..100)) {
            let (a, b): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            prop_assert_eq!(cohen_kappa(&a, &b).unwrap().kappa, cohen_kappa(&b, &a).unwrap().kappa);
        }

        #[test]
        fn trust_monotone(q in 0.0f64..=1.0, f in 0.0f64..=1.0, c in 0.0f64..=1.0, bump in 0.0f64..=1.0) {
            let w = TrustWeights::default();
            let base = weighted_trust(q, f, c, &w).unwrap();
            prop_assert!(weighted_trust((q + bump).min(1.0), f, c, &w).unwrap() >= base);
            prop_assert!(weighted_trust(q, (f + bump).min(1.0), c, &w).unwrap() >= base);
            prop_assert!(weighted_trust(q, f, (c + bump).min(1.0), &w).unwrap() >= base);
        }
    }
}
