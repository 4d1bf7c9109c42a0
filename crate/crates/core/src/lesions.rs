//! Lesion mask post-processing: thresholding, component labelling,
//! quadrant counting and severity staging.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ClassLabel;
use crate::imgio::{BinaryMask, ProbMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LesionKind {
    #[serde(rename = "HEM")]
    Hem,
    #[serde(rename = "SE")]
    Se,
    #[serde(rename = "HE")]
    He,
    #[serde(rename = "MA")]
    Ma,
}

impl LesionKind {
    /// Report column order.
    pub const ALL: [LesionKind; 4] = [LesionKind::Hem, LesionKind::Se, LesionKind::He, LesionKind::Ma];

    pub fn code(self) -> &'static str {
        match self {
            LesionKind::Hem => "HEM",
            LesionKind::Se => "SE",
            LesionKind::He => "HE",
            LesionKind::Ma => "MA",
        }
    }

    pub fn from_code(s: &str) -> Option<LesionKind> {
        LesionKind::ALL.into_iter().find(|k| k.code().eq_ignore_ascii_case(s))
    }

    pub fn description(self) -> &'static str {
        match self {
            LesionKind::Hem => "hemorrhage",
            LesionKind::Se => "soft exudate",
            LesionKind::He => "hard exudate",
            LesionKind::Ma => "microaneurysm",
        }
    }
}

impl fmt::Display for LesionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

pub const OTSU_BINS: usize = 256;

fn bin_of(p: f32) -> usize {
    ((p as f64 * OTSU_BINS as f64) as usize).min(OTSU_BINS - 1)
}

/// Between-class variance, up to a constant factor, of splitting at `k`,
/// from exact integer class counts and level sums.
pub(crate) fn split_variance(n0: u64, s0: u64, n1: u64, s1: u64) -> Option<f64> {
    if n0 == 0 || n1 == 0 {
        return None;
    }
    let diff = n1 as i128 * s0 as i128 - n0 as i128 * s1 as i128;
    let diff = diff as f64;
    Some(diff * diff / (n0 as f64 * n1 as f64))
}

/// Otsu threshold over a 256-bin histogram. Bin `i` holds `p` with
/// `floor(256 p) == i` (1.0 joins the top bin); candidate `k` separates
/// bins below `k` from the rest and is returned as `k / 256`, so
/// `binarize` at the result reproduces the split exactly.
pub fn otsu_threshold(p: &ProbMask) -> Result<f64> {
    let mut hist = [0u64; OTSU_BINS];
    for &v in p.data() {
        hist[bin_of(v)] += 1;
    }
    let n: u64 = hist.iter().sum();
    let total: u64 = hist.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();
    let (mut n0, mut s0) = (0u64, 0u64);
    let mut best: Option<(usize, f64)> = None;
    for k in 1..OTSU_BINS {
        n0 += hist[k - 1];
        s0 += (k as u64 - 1) * hist[k - 1];
        if let Some(v) = split_variance(n0, s0, n - n0, total - s0) {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((k, v));
            }
        }
    }
    best.map(|(k, _)| k as f64 / OTSU_BINS as f64)
        .ok_or(Error::ConstantMask)
}

/// `true` where `p >= t`.
pub fn binarize(p: &ProbMask, t: f64) -> BinaryMask {
    let data = p.data().iter().map(|&v| v as f64 >= t).collect();
    BinaryMask::new(p.width(), p.height(), data).expect("dimensions come from a valid mask")
}

/// How a probability mask is turned into a binary mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdMode {
    /// Otsu's threshold, never below `floor`. A mask with a single
    /// occupied bin has no Otsu split and uses `floor` directly.
    Otsu {
        floor: f64,
    },
    Fixed {
        value: f64,
    },
}

impl Default for ThresholdMode {
    fn default() -> Self {
        ThresholdMode::Otsu { floor: 0.5 }
    }
}

impl ThresholdMode {
    pub fn validate(&self) -> Result<()> {
        let v = match *self {
            ThresholdMode::Otsu { floor } => floor,
            ThresholdMode::Fixed { value } => value,
        };
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParameter {
                name: "threshold",
                reason: format!("{v} is outside [0, 1]"),
            });
        }
        Ok(())
    }

    pub fn resolve(&self, p: &ProbMask) -> f64 {
        match *self {
            ThresholdMode::Fixed { value } => value,
            ThresholdMode::Otsu { floor } => match otsu_threshold(p) {
                Ok(t) => t.max(floor),
                Err(_) => floor,
            },
        }
    }
}

pub const DEFAULT_MIN_AREA: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Member pixels as `(x, y)`, in raster order.
    pub pixels: Vec<(usize, usize)>,
    pub centroid: (f64, f64),
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

/// 8-connected components with at least `min_area` pixels, ordered by
/// their first pixel in raster order.
pub fn connected_components(m: &BinaryMask, min_area: usize) -> Vec<Component> {
    let (w, h) = m.dims();
    let data = m.data();
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !data[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut members = Vec::new();
        while let Some(i) = stack.pop() {
            members.push(i);
            let (x, y) = (i % w, i / w);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if data[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if members.len() < min_area {
            continue;
        }
        members.sort_unstable();
        let n = members.len() as f64;
        let sx: f64 = members.iter().map(|&i| (i % w) as f64).sum();
        let sy: f64 = members.iter().map(|&i| (i / w) as f64).sum();
        out.push(Component {
            pixels: members.iter().map(|&i| (i % w, i / w)).collect(),
            centroid: (sx / n, sy / n),
        });
    }
    out
}

/// Quadrant of a point around `center`, numbered counter-clockwise from
/// the upper right (image y grows downward). Points on a dividing line
/// go to the lower-numbered neighbour.
pub fn quadrant_of(point: (f64, f64), center: (f64, f64)) -> u8 {
    let (x, y) = point;
    let (cx, cy) = center;
    if y <= cy {
        if x >= cx {
            1
        } else {
            2
        }
    } else if x <= cx {
        3
    } else {
        4
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LesionMap {
    pub kind: LesionKind,
    pub components: Vec<Component>,
}

impl LesionMap {
    pub fn from_mask(kind: LesionKind, m: &BinaryMask, min_area: usize) -> LesionMap {
        LesionMap {
            kind,
            components: connected_components(m, min_area),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// Component counts per quadrant 1..4 (index 0 is quadrant 1).
pub fn quadrant_counts(map: &LesionMap, dims: (usize, usize), center: (f64, f64)) -> Result<[usize; 4]> {
    let (w, h) = dims;
    if !(center.0 >= 0.0 && center.0 < w as f64 && center.1 >= 0.0 && center.1 < h as f64) {
        return Err(Error::InvalidParameter {
            name: "center",
            reason: format!("({}, {}) lies outside the {w}x{h} image", center.0, center.1),
        });
    }
    let mut counts = [0; 4];
    for c in &map.components {
        counts[quadrant_of(c.centroid, center) as usize - 1] += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FiveStage {
    S0,
    S1,
    S2,
    S3,
    S4,
}

impl FiveStage {
    pub fn collapse(self) -> ClassLabel {
        match self {
            FiveStage::S0 => ClassLabel::NoDr,
            FiveStage::S1 | FiveStage::S2 => ClassLabel::MildDr,
            FiveStage::S3 | FiveStage::S4 => ClassLabel::SevereDr,
        }
    }
}

/// Hemorrhage count that must be exceeded in every quadrant for S3.
pub const SEVERE_HEM_PER_QUADRANT: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityStage {
    pub five_level: FiveStage,
    pub three_level: ClassLabel,
    pub reason: String,
}

/// Stages from the four lesion maps. Only the hemorrhage-count criterion
/// is available for S3; S4 is never produced.
pub fn stage(
    lesions: &BTreeMap<LesionKind, LesionMap>,
    dims: (usize, usize),
    center: (f64, f64),
) -> Result<SeverityStage> {
    let get = |k: LesionKind| lesions.get(&k).ok_or(Error::MissingLesionKind(k.code()));
    let (hem, se, he, ma) = (
        get(LesionKind::Hem)?,
        get(LesionKind::Se)?,
        get(LesionKind::He)?,
        get(LesionKind::Ma)?,
    );
    let hem_q = quadrant_counts(hem, dims, center)?;
    let (five, reason) = if hem_q.iter().all(|&n| n > SEVERE_HEM_PER_QUADRANT) {
        (
            FiveStage::S3,
            format!(
                "more than {SEVERE_HEM_PER_QUADRANT} hemorrhages in each of 4 quadrants ({} / {} / {} / {})",
                hem_q[0], hem_q[1], hem_q[2], hem_q[3]
            ),
        )
    } else if [hem, se, he, ma].iter().all(|m| m.is_empty()) {
        (FiveStage::S0, "no lesions found".to_string())
    } else if hem.is_empty() && se.is_empty() && he.is_empty() {
        (
            FiveStage::S1,
            format!("microaneurysms only ({} found)", ma.components.len()),
        )
    } else {
        let found: Vec<String> = [hem, se, he, ma]
            .iter()
            .filter(|m| !m.is_empty())
            .map(|m| format!("{} {}", m.components.len(), m.kind))
            .collect();
        (
            FiveStage::S2,
            format!(
                "lesions beyond microaneurysms ({}) without the severe hemorrhage pattern",
                found.join(", ")
            ),
        )
    };
    Ok(SeverityStage {
        five_level: five,
        three_level: five.collapse(),
        reason,
    })
}
