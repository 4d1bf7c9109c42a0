use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: file not found")]
    MissingFile { path: PathBuf },

    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("{path}: truncated pixel data (expected {expected} bytes, found {found})")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad magic bytes, expected {expected:?}")]
    BadMagic { path: PathBuf, expected: &'static str },

    #[error("{path}: dimensions {width}x{height} overflow")]
    DimensionOverflow { path: PathBuf, width: u64, height: u64 },

    #[error("{path}: probability {value} at index {index} is outside [0, 1]")]
    OutOfRange { path: PathBuf, index: usize, value: f32 },

    #[error("invalid dimensions {width}x{height}: {reason}")]
    InvalidDimensions {
        width: usize,
        height: usize,
        reason: String,
    },

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("channel {channel} has zero variance inside the fundus mask")]
    ZeroVariance { channel: char },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("kernel dimensions {rows}x{cols} must be odd in both axes")]
    EvenKernel { rows: usize, cols: usize },

    #[error("{path}: row {row}: {reason}")]
    Csv { path: PathBuf, row: usize, reason: String },

    #[error("{path}: row {row}: unknown label {label:?}")]
    UnknownLabel { path: PathBuf, row: usize, label: String },

    #[error("feature vectors come from different sources ({left:?} vs {right:?})")]
    SourceMismatch { left: String, right: String },

    #[error("no feature vector recorded for source id {0:?}")]
    MissingFeatureEntry(String),

    #[error("inference failed: {0}")]
    Inference(String),

    #[error("feature dimension mismatch: model expects {expected}, got {found}")]
    FeatureDimension { expected: usize, found: usize },

    #[error("training set has no samples of class {0}")]
    MissingClass(&'static str),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("{path}: model format version {found} is newer than supported version {supported}")]
    VersionMismatch { path: PathBuf, found: u32, supported: u32 },

    #[error("{path}: corrupt payload: {reason}")]
    CorruptPayload { path: PathBuf, reason: String },

    #[error("ensemble has no members")]
    EmptyEnsemble,

    #[error("invalid ensemble weights: {0}")]
    InvalidWeights(String),

    #[error("probability mask is constant; no threshold separates two classes")]
    ConstantMask,

    #[error("lesion map for {0} is missing")]
    MissingLesionKind(&'static str),

    #[error("invalid trust weights: {0}")]
    InvalidTrustWeights(String),

    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("lesion spec does not fit: {0}")]
    SpecOverflow(String),

    #[error("config {path}: {reason}")]
    Config { path: String, reason: String },

    #[error("missing inputs: {}", .0.join("; "))]
    MissingInputs(Vec<String>),

    #[error("no mask pairs found")]
    NoPairs,

    #[error("unpaired mask files: {}", .0.join(", "))]
    Unpaired(Vec<String>),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile { path }
        } else {
            Error::Io { path, source }
        }
    }
}
