//! Synthetic fundus images, lesion masks and feature datasets with exact
//! ground truth, for tests and demos that need no external data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{ClassLabel, FeatureDataset, FeatureVector};
use crate::imgio::{clamp_u8, BinaryMask, ProbMask, RgbImage};
use crate::lesions::LesionKind;
use crate::rng::SeededRng;

/// Lesions of one kind: how many to place in each quadrant and the range
/// of their radii in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LesionSpec {
    pub per_quadrant: [usize; 4],
    pub radius: (f64, f64),
}

impl LesionSpec {
    pub fn default_radius(kind: LesionKind) -> (f64, f64) {
        match kind {
            LesionKind::Ma => (1.5, 2.0),
            LesionKind::Hem => (2.0, 3.5),
            LesionKind::He => (2.0, 3.5),
            LesionKind::Se => (3.0, 5.0),
        }
    }

    pub fn new(kind: LesionKind, per_quadrant: [usize; 4]) -> Self {
        LesionSpec {
            per_quadrant,
            radius: Self::default_radius(kind),
        }
    }

    /// `n` lesions spread as evenly as possible over the quadrants.
    pub fn spread(kind: LesionKind, n: usize) -> Self {
        Self::new(kind, [0, 1, 2, 3].map(|q| n / 4 + usize::from(q < n % 4)))
    }

    pub fn total(&self) -> usize {
        self.per_quadrant.iter().sum()
    }
}

pub type FundusSpec = BTreeMap<LesionKind, LesionSpec>;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFundus {
    pub image: RgbImage,
    /// Ground truth per kind; every kind is present, possibly empty.
    pub lesions: BTreeMap<LesionKind, BinaryMask>,
    pub disc: BinaryMask,
    pub vessels: BinaryMask,
    /// Integer centre of the fundus circle.
    pub center: (f64, f64),
    pub radius: f64,
}

const FUNDUS_RGB: [f64; 3] = [165.0, 78.0, 38.0];
const DISC_RGB: [f64; 3] = [245.0, 215.0, 160.0];
const VESSEL_RGB: [f64; 3] = [105.0, 28.0, 18.0];

fn lesion_rgb(kind: LesionKind) -> [f64; 3] {
    match kind {
        LesionKind::Hem => [85.0, 18.0, 12.0],
        LesionKind::Ma => [110.0, 22.0, 14.0],
        LesionKind::He => [235.0, 205.0, 70.0],
        LesionKind::Se => [215.0, 205.0, 180.0],
    }
}

/// Gap kept between any two lesions and between lesions and the disc,
/// wide enough that no two lesions touch under 8-connectivity.
const GAP: f64 = 3.0;
/// Distance kept between a lesion centre and the quadrant dividers.
const AXIS_MARGIN: f64 = 2.0;
const MAX_ATTEMPTS: usize = 4000;

struct Canvas {
    w: usize,
    h: usize,
    rgb: Vec<[f64; 3]>,
}

impl Canvas {
    fn disc_pixels(&self, cx: f64, cy: f64, r: f64) -> impl Iterator<Item = usize> + '_ {
        let (x0, x1) = (
            (cx - r).floor().max(0.0) as usize,
            ((cx + r).ceil() as usize).min(self.w - 1),
        );
        let (y0, y1) = (
            (cy - r).floor().max(0.0) as usize,
            ((cy + r).ceil() as usize).min(self.h - 1),
        );
        (y0..=y1).flat_map(move |y| {
            (x0..=x1).filter_map(move |x| {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                (dx * dx + dy * dy <= r * r).then_some(y * self.w + x)
            })
        })
    }
}

/// Renders a fundus-like image with lesions placed per `spec`. Lesion
/// centres sit on integer pixels, at least two pixels off the quadrant
/// dividers through `center`, clear of the optic disc and of each other.
pub fn gen_fundus(seed: u64, dims: (usize, usize), spec: &FundusSpec) -> Result<SynthFundus> {
    let (w, h) = dims;
    if w < 128 || h < 128 {
        return Err(Error::InvalidDimensions {
            width: w,
            height: h,
            reason: "synthetic fundus needs at least 128x128".into(),
        });
    }
    for (kind, s) in spec {
        if !(s.radius.0 >= 1.0 && s.radius.1 >= s.radius.0) {
            return Err(Error::InvalidParameter {
                name: "radius",
                reason: format!("{kind}: radius range {:?} must satisfy 1 <= min <= max", s.radius),
            });
        }
    }
    let mut rng = SeededRng::new(seed);
    let min_dim = w.min(h) as f64;
    let radius = (0.45 * min_dim).floor();
    let jitter = (min_dim / 40.0).floor() as i64;
    let shift = |rng: &mut SeededRng| rng.below(2 * jitter as usize + 1) as i64 - jitter;
    let cx = (w / 2) as i64 + shift(&mut rng);
    let cy = (h / 2) as i64 + shift(&mut rng);
    let center = (cx as f64, cy as f64);

    let mut canvas = Canvas {
        w,
        h,
        rgb: vec![[0.0; 3]; w * h],
    };
    let tint: [f64; 3] = [0, 1, 2].map(|_| rng.uniform_range(0.92, 1.08));
    let mut inside = vec![false; w * h];
    for i in canvas.disc_pixels(center.0, center.1, radius).collect::<Vec<_>>() {
        let (dx, dy) = ((i % w) as f64 - center.0, (i / w) as f64 - center.1);
        let falloff = 1.0 - 0.3 * (dx * dx + dy * dy) / (radius * radius);
        inside[i] = true;
        canvas.rgb[i] = [0, 1, 2].map(|c| FUNDUS_RGB[c] * tint[c] * falloff);
    }

    // optic disc: an ellipse left or right of centre
    let side = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
    let disc_c = (
        center.0 + side * radius * rng.uniform_range(0.45, 0.55),
        center.1 + radius * rng.uniform_range(-0.08, 0.08),
    );
    let (ax, ay) = (radius * 0.13, radius * 0.15);
    let mut disc = vec![false; w * h];
    for (i, d) in disc.iter_mut().enumerate() {
        let (dx, dy) = (((i % w) as f64 - disc_c.0) / ax, ((i / w) as f64 - disc_c.1) / ay);
        if dx * dx + dy * dy <= 1.0 && inside[i] {
            *d = true;
            let glow = 1.0 - 0.2 * (dx * dx + dy * dy);
            canvas.rgb[i] = DISC_RGB.map(|v| v * glow);
        }
    }

    // vessels: branching random walks leaving the disc
    let mut vessels = vec![false; w * h];
    let mut walkers: Vec<(f64, f64, f64, f64, usize)> = (0..4)
        .map(|k| {
            let base = std::f64::consts::FRAC_PI_4 + k as f64 * std::f64::consts::FRAC_PI_2;
            let angle = base + rng.uniform_range(-0.3, 0.3);
            (disc_c.0, disc_c.1, angle, 1.6, 0)
        })
        .collect();
    let step = radius / 10.0;
    while let Some((mut x, mut y, mut angle, width, depth)) = walkers.pop() {
        for seg in 0..30 {
            angle += rng.uniform_range(-0.35, 0.35);
            let (nx, ny) = (x + step * angle.cos(), y + step * angle.sin());
            let n = (step * 2.0).ceil() as usize;
            for t in 0..=n {
                let f = t as f64 / n as f64;
                let (px, py) = (x + f * (nx - x), y + f * (ny - y));
                for i in canvas.disc_pixels(px, py, width).collect::<Vec<_>>() {
                    if inside[i] && !disc[i] {
                        vessels[i] = true;
                        canvas.rgb[i] = VESSEL_RGB;
                    }
                }
            }
            (x, y) = (nx, ny);
            let (dx, dy) = (x - center.0, y - center.1);
            if dx * dx + dy * dy > radius * radius {
                break;
            }
            if depth < 2 && seg % 6 == 5 && rng.uniform() < 0.6 {
                let turn = if rng.uniform() < 0.5 { -0.6 } else { 0.6 };
                walkers.push((x, y, angle + turn, (width * 0.75).max(1.0), depth + 1));
            }
        }
    }

    // lesions
    let mut placed: Vec<(f64, f64, f64)> = Vec::new();
    let mut lesions = BTreeMap::new();
    for kind in LesionKind::ALL {
        let mut mask = vec![false; w * h];
        if let Some(s) = spec.get(&kind) {
            for (q, &count) in s.per_quadrant.iter().enumerate() {
                for _ in 0..count {
                    let r = rng.uniform_range(s.radius.0, s.radius.1);
                    let (lx, ly) = place(&mut rng, q as u8 + 1, r, center, radius, disc_c, (ax, ay), &placed)
                        .ok_or_else(|| {
                            Error::SpecOverflow(format!(
                                "could not place {count} {kind} lesions in quadrant {} of a {w}x{h} image",
                                q + 1
                            ))
                        })?;
                    placed.push((lx, ly, r));
                    let rgb = lesion_rgb(kind);
                    for i in canvas.disc_pixels(lx, ly, r).collect::<Vec<_>>() {
                        mask[i] = true;
                        canvas.rgb[i] = rgb;
                    }
                }
            }
        }
        lesions.insert(kind, BinaryMask::new(w, h, mask)?);
    }

    let mut data = Vec::with_capacity(w * h * 3);
    for (i, px) in canvas.rgb.iter().enumerate() {
        for &v in px {
            let noise = if inside[i] { 3.0 * rng.normal() } else { 0.0 };
            // keep every field pixel visibly non-black
            let v = if inside[i] { (v + noise).max(12.0) } else { 0.0 };
            data.push(clamp_u8(v));
        }
    }
    Ok(SynthFundus {
        image: RgbImage::new(w, h, data)?,
        lesions,
        disc: BinaryMask::new(w, h, disc)?,
        vessels: BinaryMask::new(w, h, vessels)?,
        center,
        radius,
    })
}

#[allow(clippy::too_many_arguments)]
fn place(
    rng: &mut SeededRng,
    quadrant: u8,
    r: f64,
    center: (f64, f64),
    radius: f64,
    disc_c: (f64, f64),
    disc_axes: (f64, f64),
    placed: &[(f64, f64, f64)],
) -> Option<(f64, f64)> {
    // image y grows downward: quadrant 1 is upper right
    let (sx, sy) = match quadrant {
        1 => (1.0, -1.0),
        2 => (-1.0, -1.0),
        3 => (-1.0, 1.0),
        _ => (1.0, 1.0),
    };
    let reach = radius - r - GAP;
    for _ in 0..MAX_ATTEMPTS {
        let dx = (rng.uniform() * reach).round();
        let dy = (rng.uniform() * reach).round();
        if dx < AXIS_MARGIN || dy < AXIS_MARGIN || dx * dx + dy * dy > reach * reach {
            continue;
        }
        let (x, y) = (center.0 + sx * dx, center.1 + sy * dy);
        let (ex, ey) = (
            (x - disc_c.0) / (disc_axes.0 + r + GAP),
            (y - disc_c.1) / (disc_axes.1 + r + GAP),
        );
        if ex * ex + ey * ey <= 1.0 {
            continue;
        }
        let clear = placed.iter().all(|&(px, py, pr)| {
            let d = r + pr + GAP;
            (px - x).powi(2) + (py - y).powi(2) > d * d
        });
        if clear {
            return Some((x, y));
        }
    }
    None
}

/// Turns a ground-truth mask into a plausible network output: lesion
/// pixels in [0.8, 1], background in [0, 0.15].
pub fn soften_mask(mask: &BinaryMask, seed: u64) -> ProbMask {
    let mut rng = SeededRng::new(seed);
    let data = mask
        .data()
        .iter()
        .map(|&m| {
            let v = if m {
                rng.uniform_range(0.8, 1.0)
            } else {
                rng.uniform_range(0.0, 0.15)
            };
            v as f32
        })
        .collect();
    ProbMask::new(mask.width(), mask.height(), data).expect("values are in range")
}

/// Typical lesion load for an image of the given grade. The severe load
/// needs images of at least 192 pixels on the short side.
pub fn graded_spec(class: ClassLabel, rng: &mut SeededRng) -> FundusSpec {
    let mut spec = FundusSpec::new();
    let mut add = |kind: LesionKind, lo: usize, hi: usize, rng: &mut SeededRng| {
        let n = lo + rng.below(hi - lo + 1);
        spec.insert(kind, LesionSpec::spread(kind, n));
    };
    match class {
        ClassLabel::NoDr => {}
        ClassLabel::MildDr => {
            add(LesionKind::Ma, 4, 10, rng);
            add(LesionKind::He, 6, 12, rng);
        }
        ClassLabel::SevereDr => {
            add(LesionKind::Ma, 4, 10, rng);
            add(LesionKind::Se, 3, 6, rng);
            let hem = [0; 4].map(|_| 21 + rng.below(6));
            spec.insert(LesionKind::Hem, LesionSpec::new(LesionKind::Hem, hem));
        }
    }
    spec
}

/// Applies a random per-channel gain in `[1 - gain, 1 + gain]` and offset
/// in `[-offset, offset]` to pixels inside `field`, as a change of camera
/// or illumination would.
pub fn jitter_channels(img: &RgbImage, field: &BinaryMask, gain: f64, offset: f64, rng: &mut SeededRng) -> RgbImage {
    let g: [f64; 3] = [0, 1, 2].map(|_| rng.uniform_range(1.0 - gain, 1.0 + gain));
    let o: [f64; 3] = [0, 1, 2].map(|_| rng.uniform_range(-offset, offset));
    let mut data = img.data().to_vec();
    for (i, &inside) in field.data().iter().enumerate() {
        if inside {
            for c in 0..3 {
                let v = data[i * 3 + c] as f64 * g[c] + o[c];
                data[i * 3 + c] = clamp_u8(v.max(12.0));
            }
        }
    }
    RgbImage::new(img.width(), img.height(), data).expect("same dimensions")
}

/// Three Gaussian clusters with unit spread whose centres form an
/// equilateral triangle of side `separation` in a random 2-d subspace.
pub fn gen_features(seed: u64, n_per_class: usize, d: usize, separation: f64) -> Result<FeatureDataset> {
    if d < 2 {
        return Err(Error::InvalidParameter {
            name: "d",
            reason: "at least two dimensions are needed".into(),
        });
    }
    let mut rng = SeededRng::new(seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(2);
    while basis.len() < 2 {
        let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let s = separation;
    let h = s * 3f64.sqrt() / 2.0;
    // vertices centred on the origin
    let corners = [(-s / 2.0, -h / 3.0), (s / 2.0, -h / 3.0), (0.0, 2.0 * h / 3.0)];
    let mut vectors = Vec::with_capacity(3 * n_per_class);
    let mut labels = Vec::with_capacity(3 * n_per_class);
    for (c, &(a, b)) in corners.iter().enumerate() {
        for i in 0..n_per_class {
            let values = (0..d)
                .map(|j| a * basis[0][j] + b * basis[1][j] + rng.normal())
                .collect();
            vectors.push(FeatureVector::new(format!("syn_c{c}_{i:05}"), values)?);
            labels.push(ClassLabel::ALL[c]);
        }
    }
    FeatureDataset::new(vectors, labels)
}
