//! Feature vectors, labelled datasets and the extractor boundary.
//!
//! Feature CSV layout: header `id,f0,f1,...,f{d-1},label`, one sample per
//! row, floats written with 17 significant digits so values round-trip.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{BinaryMask, RgbImage};
use crate::rng::SeededRng;

/// Default per-extractor width; two extractors concatenate to 1056.
pub const DEFAULT_BLOCK_DIM: usize = 528;

/// Three-level grade, ordered by clinical severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum ClassLabel {
    NoDr = 0,
    MildDr = 1,
    SevereDr = 2,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::NoDr, ClassLabel::MildDr, ClassLabel::SevereDr];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ClassLabel> {
        Self::ALL.get(i).copied()
    }

    /// Collapse the five-level clinical grade (0..=4): 0 -> none,
    /// 1-2 -> mild, 3-4 -> severe.
    pub fn from_five_level(grade: u8) -> Option<ClassLabel> {
        match grade {
            0 => Some(ClassLabel::NoDr),
            1 | 2 => Some(ClassLabel::MildDr),
            3 | 4 => Some(ClassLabel::SevereDr),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::NoDr => "No-DR",
            ClassLabel::MildDr => "Mild-DR",
            ClassLabel::SevereDr => "Severe-DR",
        }
    }
}

impl From<ClassLabel> for u8 {
    fn from(c: ClassLabel) -> u8 {
        c as u8
    }
}

impl TryFrom<u8> for ClassLabel {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        ClassLabel::from_index(v as usize).ok_or_else(|| format!("unknown class label {v}"))
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Index of the highest score, ties going to the more severe class.
pub fn severity_argmax(scores: &[f64; 3]) -> ClassLabel {
    let mut best = 0;
    for c in 1..3 {
        if scores[c] >= scores[best] {
            best = c;
        }
    }
    ClassLabel::ALL[best]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub source_id: String,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(source_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let source_id = source_id.into();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "values",
                reason: format!("{source_id}: component {i} is not finite"),
            });
        }
        Ok(Self { source_id, values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Join two extractor outputs for the same image, `a` block first.
pub fn concat_features(a: &FeatureVector, b: &FeatureVector) -> Result<FeatureVector> {
    if a.source_id != b.source_id {
        return Err(Error::SourceMismatch {
            left: a.source_id.clone(),
            right: b.source_id.clone(),
        });
    }
    let mut values = Vec::with_capacity(a.dim() + b.dim());
    values.extend_from_slice(&a.values);
    values.extend_from_slice(&b.values);
    Ok(FeatureVector {
        source_id: a.source_id.clone(),
        values,
    })
}

/// Per-dimension z-score parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const STD_FLOOR: f64 = 1e-12;

impl Scaler {
    pub fn transform(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn inverse(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    pub vectors: Vec<FeatureVector>,
    pub labels: Vec<ClassLabel>,
    pub scaler: Option<Scaler>,
}

impl FeatureDataset {
    pub fn new(vectors: Vec<FeatureVector>, labels: Vec<ClassLabel>) -> Result<Self> {
        if vectors.len() != labels.len() {
            return Err(Error::LengthMismatch(vectors.len(), labels.len()));
        }
        if let Some(first) = vectors.first() {
            if let Some(bad) = vectors.iter().find(|v| v.dim() != first.dim()) {
                return Err(Error::FeatureDimension {
                    expected: first.dim(),
                    found: bad.dim(),
                });
            }
        }
        Ok(Self {
            vectors,
            labels,
            scaler: None,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, FeatureVector::dim)
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for l in &self.labels {
            counts[l.index()] += 1;
        }
        counts
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], ClassLabel)> {
        self.vectors
            .iter()
            .map(|v| v.values.as_slice())
            .zip(self.labels.iter().copied())
    }

    /// Apply `scaler` to every vector and record it on the dataset.
    pub fn standardized(&self, scaler: &Scaler) -> Result<FeatureDataset> {
        if scaler.dim() != self.dim() {
            return Err(Error::FeatureDimension {
                expected: scaler.dim(),
                found: self.dim(),
            });
        }
        Ok(FeatureDataset {
            vectors: self
                .vectors
                .iter()
                .map(|v| FeatureVector {
                    source_id: v.source_id.clone(),
                    values: scaler.transform(&v.values),
                })
                .collect(),
            labels: self.labels.clone(),
            scaler: Some(scaler.clone()),
        })
    }

    /// Per-class shuffled split; each class contributes `round(n_c * val_fraction)`
    /// samples to the validation side.
    pub fn stratified_split(&self, val_fraction: f64, seed: u64) -> (FeatureDataset, FeatureDataset) {
        let mut rng = SeededRng::new(seed);
        let (mut train, mut val) = (Vec::new(), Vec::new());
        for class in ClassLabel::ALL {
            let mut idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == class).collect();
            rng.shuffle(&mut idx);
            let n_val = (idx.len() as f64 * val_fraction).round() as usize;
            val.extend_from_slice(&idx[..n_val]);
            train.extend_from_slice(&idx[n_val..]);
        }
        train.sort_unstable();
        val.sort_unstable();
        let pick = |idx: &[usize]| FeatureDataset {
            vectors: idx.iter().map(|&i| self.vectors[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            scaler: None,
        };
        (pick(&train), pick(&val))
    }
}

/// Population mean and standard deviation per dimension, std floored at 1e-12.
pub fn fit_scaler(ds: &FeatureDataset) -> Result<Scaler> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (n, d) = (ds.len() as f64, ds.dim());
    let mut mean = vec![0.0; d];
    for v in &ds.vectors {
        for (m, x) in mean.iter_mut().zip(&v.values) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for v in &ds.vectors {
        for ((s, x), m) in var.iter_mut().zip(&v.values).zip(&mean) {
            *s += (x - m).powi(2);
        }
    }
    let std = var.into_iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
    Ok(Scaler { mean, std })
}

struct FeatureTable {
    rows: Vec<(FeatureVector, Option<ClassLabel>)>,
}

fn read_feature_table(path: &Path, require_label: bool) -> Result<FeatureTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, 1, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, 1, e))?.clone();
    let bad_header = |reason: &str| Error::Csv {
        path: path.into(),
        row: 1,
        reason: reason.into(),
    };
    if header.get(0) != Some("id") {
        return Err(bad_header("first column must be `id`"));
    }
    let has_label = header.iter().next_back() == Some("label");
    if require_label && !has_label {
        return Err(bad_header("last column must be `label`"));
    }
    let d = header.len() - 1 - usize::from(has_label);
    for (j, name) in header.iter().skip(1).take(d).enumerate() {
        if name != format!("f{j}") {
            return Err(bad_header(&format!("expected column f{j}, found {name:?}")));
        }
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| csv_error(path, line, e))?;
        if record.len() != header.len() {
            return Err(Error::Csv {
                path: path.into(),
                row: line,
                reason: format!("ragged row: {} fields, header has {}", record.len(), header.len()),
            });
        }
        let mut values = Vec::with_capacity(d);
        for (j, field) in record.iter().skip(1).take(d).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Csv {
                path: path.into(),
                row: line,
                reason: format!("f{j}: not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv {
                    path: path.into(),
                    row: line,
                    reason: format!("f{j}: non-finite value {field:?}"),
                });
            }
            values.push(v);
        }
        let label = if has_label {
            let raw = record.get(header.len() - 1).unwrap_or("").trim();
            match raw.parse::<u8>().ok().and_then(|v| ClassLabel::try_from(v).ok()) {
                Some(l) => Some(l),
                None if raw.is_empty() && !require_label => None,
                None => {
                    return Err(Error::UnknownLabel {
                        path: path.into(),
                        row: line,
                        label: raw.to_string(),
                    })
                }
            }
        } else {
            None
        };
        let id = record.get(0).unwrap_or("").to_string();
        rows.push((FeatureVector { source_id: id, values }, label));
    }
    Ok(FeatureTable { rows })
}

fn csv_error(path: &Path, row: usize, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Csv {
            path: path.into(),
            row,
            reason: format!("{other:?}"),
        },
    }
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureDataset> {
    let path = path.as_ref();
    let table = read_feature_table(path, true)?;
    let (vectors, labels) = table
        .rows
        .into_iter()
        .map(|(v, l)| (v, l.expect("labels are required")))
        .unzip();
    FeatureDataset::new(vectors, labels)
}

fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn save_features(ds: &FeatureDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, 0, e))?;
    let mut header = vec!["id".to_string()];
    header.extend((0..ds.dim()).map(|j| format!("f{j}")));
    header.push("label".into());
    writer.write_record(&header).map_err(|e| csv_error(path, 1, e))?;
    for (i, (v, l)) in ds.vectors.iter().zip(&ds.labels).enumerate() {
        let mut rec = Vec::with_capacity(ds.dim() + 2);
        rec.push(v.source_id.clone());
        rec.extend(v.values.iter().map(|&x| format_float(x)));
        rec.push(l.index().to_string());
        writer.write_record(&rec).map_err(|e| csv_error(path, i + 2, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Turns an image (or its identifier) into a feature vector.
pub trait FeatureExtractor: Send + Sync {
    fn extract(&self, source_id: &str, img: Option<&RgbImage>) -> Result<FeatureVector>;
}

/// Lookup of vectors computed offline, keyed by source id.
#[derive(Debug, Clone, Default)]
pub struct FileExtractor {
    table: HashMap<String, Vec<f64>>,
}

impl FileExtractor {
    /// Reads a feature CSV; the label column is optional and ignored.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let table = read_feature_table(path.as_ref(), false)?;
        Ok(Self {
            table: table.rows.into_iter().map(|(v, _)| (v.source_id, v.values)).collect(),
        })
    }

    pub fn from_vectors(vectors: impl IntoIterator<Item = FeatureVector>) -> Self {
        Self {
            table: vectors.into_iter().map(|v| (v.source_id, v.values)).collect(),
        }
    }
}

impl FeatureExtractor for FileExtractor {
    fn extract(&self, source_id: &str, _img: Option<&RgbImage>) -> Result<FeatureVector> {
        self.table
            .get(source_id)
            .map(|v| FeatureVector {
                source_id: source_id.to_string(),
                values: v.clone(),
            })
            .ok_or_else(|| Error::MissingFeatureEntry(source_id.to_string()))
    }
}

impl FeatureExtractor for Box<dyn FeatureExtractor> {
    fn extract(&self, source_id: &str, img: Option<&RgbImage>) -> Result<FeatureVector> {
        (**self).extract(source_id, img)
    }
}

/// Intensity levels at which [`channel_cdf_features`] samples each channel.
pub const CDF_LEVELS: [u8; 16] = [8, 24, 40, 56, 72, 88, 104, 120, 136, 152, 168, 184, 200, 216, 232, 248];

/// Per channel, the fraction of fundus pixels at or below each of
/// [`CDF_LEVELS`]; 48 values, red block first.
pub fn channel_cdf_features(img: &RgbImage, fundus: &BinaryMask) -> Result<Vec<f64>> {
    crate::imgio::same_dims(img.dims(), fundus.dims())?;
    let mut hist = [[0usize; 256]; 3];
    let mut n = 0usize;
    for (p, &inside) in img.pixels().zip(fundus.data()) {
        if inside {
            n += 1;
            for c in 0..3 {
                hist[c][p[c] as usize] += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "fundus",
            reason: "mask selects no pixels".into(),
        });
    }
    let mut out = Vec::with_capacity(3 * CDF_LEVELS.len());
    for h in &hist {
        let mut acc = 0usize;
        let mut next = 0usize;
        for (v, &count) in h.iter().enumerate() {
            acc += count;
            while next < CDF_LEVELS.len() && CDF_LEVELS[next] as usize == v {
                out.push(acc as f64 / n as f64);
                next += 1;
            }
        }
    }
    Ok(out)
}

/// Hand-made colour-distribution features computed on the fundus field;
/// a network-free backend for small experiments.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChannelCdfExtractor;

impl FeatureExtractor for ChannelCdfExtractor {
    fn extract(&self, source_id: &str, img: Option<&RgbImage>) -> Result<FeatureVector> {
        let img = img.ok_or_else(|| Error::Inference(format!("{source_id}: image required")))?;
        let mask = crate::preprocess::fundus_mask(img);
        FeatureVector::new(source_id, channel_cdf_features(img, &mask)?)
    }
}

/// Two extractors whose outputs are concatenated, first block first.
pub struct ConcatExtractor<A, B> {
    pub first: A,
    pub second: B,
}

impl<A: FeatureExtractor, B: FeatureExtractor> FeatureExtractor for ConcatExtractor<A, B> {
    fn extract(&self, source_id: &str, img: Option<&RgbImage>) -> Result<FeatureVector> {
        concat_features(
            &self.first.extract(source_id, img)?,
            &self.second.extract(source_id, img)?,
        )
    }
}

#[cfg(feature = "onnx")]
pub use onnx_backend::OnnxExtractor;

#[cfg(feature = "onnx")]
mod onnx_backend {
    use std::path::Path;
    use std::sync::Arc;

    use tract_onnx::prelude::*;

    use super::{FeatureExtractor, FeatureVector};
    use crate::error::{Error, Result};
    use crate::imgio::RgbImage;

    type Plan = Arc<TypedRunnableModel>;

    /// Runs an exported network with input `1x3xHxW` (float, `[0, 1]`) and a
    /// single vector output.
    pub struct OnnxExtractor {
        plan: Plan,
        height: usize,
        width: usize,
    }

    fn infer(e: impl std::fmt::Display) -> Error {
        Error::Inference(e.to_string())
    }

    impl OnnxExtractor {
        pub fn load(path: impl AsRef<Path>, height: usize, width: usize) -> Result<Self> {
            let path = path.as_ref();
            if !path.exists() {
                return Err(Error::MissingFile { path: path.into() });
            }
            let plan = tract_onnx::onnx()
                .model_for_path(path)
                .and_then(|m| m.with_input_fact(0, f32::fact([1, 3, height, width]).into()))
                .and_then(|m| m.into_optimized())
                .and_then(|m| m.into_runnable())
                .map_err(infer)?;
            Ok(Self { plan, height, width })
        }

        /// Nearest-neighbour resize into a CHW float buffer.
        fn input_tensor(&self, img: &RgbImage) -> Result<Tensor> {
            let (h, w) = (self.height, self.width);
            let mut buf = vec![0f32; 3 * h * w];
            for y in 0..h {
                let sy = y * img.height() / h;
                for x in 0..w {
                    let sx = x * img.width() / w;
                    let p = img.pixel(sx, sy);
                    for c in 0..3 {
                        buf[c * h * w + y * w + x] = p[c] as f32 / 255.0;
                    }
                }
            }
            Tensor::from_shape(&[1, 3, h, w], &buf).map_err(infer)
        }
    }

    impl FeatureExtractor for OnnxExtractor {
        fn extract(&self, source_id: &str, img: Option<&RgbImage>) -> Result<FeatureVector> {
            let img = img.ok_or_else(|| Error::Inference(format!("{source_id}: the network backend needs pixels")))?;
            let input = self.input_tensor(img)?;
            let out = self.plan.run(tvec!(input.into())).map_err(infer)?;
            let view = out[0].to_plain_array_view::<f32>().map_err(infer)?;
            let values: Vec<f64> = view.iter().map(|&v| v as f64).collect();
            FeatureVector::new(source_id, values)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cdf_features_step() {
        let mut img = RgbImage::filled(4, 4, [100, 8, 255]).unwrap();
        img.set_pixel(0, 0, [0, 0, 0]);
        let mut mask = BinaryMask::new(4, 4, vec![true; 16]).unwrap();
        mask.set(0, 0, false);
        let f = channel_cdf_features(&img, &mask).unwrap();
        assert_eq!(f.len(), 48);
        let red: Vec<f64> = CDF_LEVELS.iter().map(|&l| if l >= 100 { 1.0 } else { 0.0 }).collect();
        assert_eq!(&f[..16], &red[..]);
        assert!(f[16..32].iter().all(|&v| v == 1.0));
        assert!(f[32..47].iter().all(|&v| v == 0.0));
        assert_eq!(f[47], 0.0);
        let none = BinaryMask::new(4, 4, vec![false; 16]).unwrap();
        assert!(channel_cdf_features(&img, &none).is_err());
        let v = ChannelCdfExtractor.extract("a", Some(&img)).unwrap();
        assert_eq!(v.dim(), 48);
        assert!(ChannelCdfExtractor.extract("a", None).is_err());
    }

    fn ds(rows: &[(&str, Vec<f64>, ClassLabel)]) -> FeatureDataset {
        FeatureDataset::new(
            rows.iter()
                .map(|(id, v, _)| FeatureVector::new(*id, v.clone()).unwrap())
                .collect(),
            rows.iter().map(|r| r.2).collect(),
        )
        .unwrap()
    }

    #[test]
    fn loads_small_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        std::fs::write(&p, "id,f0,f1,f2,f3,label\na,1,2,3,4,0\nb,0.5,-1e-3,7,8,2\n").unwrap();
        let d = load_features(&p).unwrap();
        assert_eq!((d.len(), d.dim()), (2, 4));
        assert_eq!(d.labels, vec![ClassLabel::NoDr, ClassLabel::SevereDr]);
        assert_eq!(d.vectors[1].values[1], -1e-3);
    }

    #[test]
    fn unknown_label_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        std::fs::write(&p, "id,f0,label\na,1,0\nb,2,7\n").unwrap();
        match load_features(&p) {
            Err(Error::UnknownLabel { row, label, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(label, "7");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ragged_and_non_finite_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        std::fs::write(&p, "id,f0,f1,label\na,1,0\n").unwrap();
        assert!(matches!(load_features(&p), Err(Error::Csv { row: 2, .. })));
        std::fs::write(&p, "id,f0,f1,label\na,1,NaN,0\n").unwrap();
        assert!(matches!(load_features(&p), Err(Error::Csv { row: 2, .. })));
        std::fs::write(&p, "id,f0,f1,label\na,1,inf,0\n").unwrap();
        assert!(matches!(load_features(&p), Err(Error::Csv { .. })));
    }

    #[test]
    fn scaler_two_samples() {
        let d = ds(&[
            ("a", vec![0.0, 5.0], ClassLabel::NoDr),
            ("b", vec![2.0, 5.0], ClassLabel::MildDr),
        ]);
        let s = fit_scaler(&d).unwrap();
        assert_eq!(s.mean, vec![1.0, 5.0]);
        assert_eq!(s.std[0], 1.0);
        assert_eq!(s.std[1], STD_FLOOR);
        let t = d.standardized(&s).unwrap();
        assert_eq!(t.vectors[0].values, vec![-1.0, 0.0]);
        assert_eq!(t.vectors[1].values, vec![1.0, 0.0]);
        assert!(matches!(
            fit_scaler(&FeatureDataset::new(vec![], vec![]).unwrap()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn concat_blocks() {
        let a = FeatureVector::new("x", (0..528).map(|i| i as f64).collect()).unwrap();
        let b = FeatureVector::new("x", (0..528).map(|i| -(i as f64)).collect()).unwrap();
        let c = concat_features(&a, &b).unwrap();
        assert_eq!(c.dim(), 1056);
        for j in [0, 17, 527] {
            assert_eq!(c.values[528 + j], b.values[j]);
        }
        let empty = FeatureVector::new("x", vec![]).unwrap();
        assert_eq!(concat_features(&a, &empty).unwrap(), a);
        let other = FeatureVector::new("y", vec![]).unwrap();
        assert!(matches!(concat_features(&a, &other), Err(Error::SourceMismatch { .. })));
    }

    #[test]
    fn file_backend_lookup() {
        let v = FeatureVector::new("img-1", vec![0.1, f64::MIN_POSITIVE, -3.5]).unwrap();
        let fx = FileExtractor::from_vectors([v.clone()]);
        assert_eq!(fx.extract("img-1", None).unwrap(), v);
        assert!(matches!(fx.extract("img-2", None), Err(Error::MissingFeatureEntry(_))));
        assert_eq!(fx.extract("img-1", None).unwrap(), fx.extract("img-1", None).unwrap());
    }

    #[test]
    fn file_backend_reads_unlabelled_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        std::fs::write(&p, "id,f0,f1\nq,1.5,2.5\n").unwrap();
        let fx = FileExtractor::load(&p).unwrap();
        assert_eq!(fx.extract("q", None).unwrap().values, vec![1.5, 2.5]);
    }

    #[test]
    fn concat_extractor_joins_backends() {
        let a = FileExtractor::from_vectors([FeatureVector::new("z", vec![1.0]).unwrap()]);
        let b = FileExtractor::from_vectors([FeatureVector::new("z", vec![2.0, 3.0]).unwrap()]);
        let both = ConcatExtractor { first: a, second: b };
        assert_eq!(both.extract("z", None).unwrap().values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn five_level_collapse() {
        let got: Vec<_> = (0..=4).map(|g| ClassLabel::from_five_level(g).unwrap()).collect();
        use ClassLabel::*;
        assert_eq!(got, vec![NoDr, MildDr, MildDr, SevereDr, SevereDr]);
        assert_eq!(ClassLabel::from_five_level(5), None);
    }

    #[test]
    fn severity_tie_break() {
        assert_eq!(severity_argmax(&[1.0, 1.0, 0.0]), ClassLabel::MildDr);
        assert_eq!(severity_argmax(&[2.0, 1.0, 2.0]), ClassLabel::SevereDr);
        assert_eq!(severity_argmax(&[3.0, 1.0, 2.0]), ClassLabel::NoDr);
    }

    fn arb_dataset() -> impl Strategy<Value = FeatureDataset> {
        (1usize..6, 1usize..8).prop_flat_map(|(d, n)| {
            proptest::collection::vec((proptest::collection::vec(-1e6f64..1e6, d), 0u8..3), n).prop_map(|rows| {
                let vectors = rows
                    .iter()
                    .enumerate()
                    .map(|(i, (v, _))| FeatureVector::new(format!("s{i}"), v.clone()).unwrap())
                    .collect();
                let labels = rows.iter().map(|r| ClassLabel::try_from(r.1).unwrap()).collect();
                FeatureDataset::new(vectors, labels).unwrap()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn csv_round_trip(d in arb_dataset()) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("f.csv");
            save_features(&d, &p).unwrap();
            let back = load_features(&p).unwrap();
            prop_assert_eq!(&back.labels, &d.labels);
            for (a, b) in back.vectors.iter().zip(&d.vectors) {
                prop_assert_eq!(&a.source_id, &b.source_id);
                for (x, y) in a.values.iter().zip(&b.values) {
                    prop_assert!((x - y).abs() <= 1e-9 * y.abs().max(1e-300));
                }
            }
        }

        #[test]
        fn scaling_inverts(d in arb_dataset()) {
            let s = fit_scaler(&d).unwrap();
            for v in &d.vectors {
                let back = s.inverse(&s.transform(&v.values));
                for (x, y) in back.iter().zip(&v.values) {
                    prop_assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0));
                }
            }
            let t = d.standardized(&s).unwrap();
            for j in 0..d.dim() {
                let m = t.vectors.iter().map(|v| v.values[j]).sum::<f64>() / t.len() as f64;
                prop_assert!(m.abs() <= 1e-9);
            }
        }
    }
}
