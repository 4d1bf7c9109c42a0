//! Fundus preprocessing chain: contrast-limited adaptive equalization,
//! color normalization, Gaussian smoothing, optic-disc removal and
//! vessel inpainting.
//!
//! All functions are pure; the chain order is fixed by [`run_chain`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgio::{clamp_u8, same_dims, BinaryMask, Plane, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaheParams {
    pub clip_limit: f64,
    pub tile_grid: usize,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self {
            clip_limit: 2.0,
            tile_grid: 8,
        }
    }
}

/// Contrast-limited adaptive histogram equalization, applied to R, G and B
/// independently.
///
/// `clip_limit` is relative to a flat histogram: a tile of `n` pixels clips
/// each bin at `clip_limit * n / 256`. Mappings of the four surrounding tile
/// centres are blended bilinearly.
pub fn clahe_rgb(img: &RgbImage, clip_limit: f64, tile_grid: usize) -> Result<RgbImage> {
    if !(clip_limit > 0.0) {
        return Err(Error::InvalidParameter {
            name: "clip_limit",
            reason: format!("must be positive, got {clip_limit}"),
        });
    }
    let (w, h) = img.dims();
    if tile_grid == 0 || tile_grid > w.min(h) {
        return Err(Error::InvalidDimensions {
            width: w,
            height: h,
            reason: format!("tile grid {tile_grid} must be in 1..=min(width, height)"),
        });
    }
    let mut out = img.data().to_vec();
    for c in 0..3 {
        let channel: Vec<u8> = img.data().iter().skip(c).step_by(3).copied().collect();
        let equalized = clahe_channel(&channel, w, h, clip_limit, tile_grid);
        for (i, v) in equalized.into_iter().enumerate() {
            out[i * 3 + c] = v;
        }
    }
    RgbImage::new(w, h, out)
}

fn tile_bounds(len: usize, grid: usize, t: usize) -> (usize, usize) {
    (t * len / grid, (t + 1) * len / grid)
}

fn clahe_channel(src: &[u8], w: usize, h: usize, clip_limit: f64, grid: usize) -> Vec<u8> {
    // luts[ty * grid + tx][v]
    let mut luts = vec![[0u8; 256]; grid * grid];
    for ty in 0..grid {
        let (y0, y1) = tile_bounds(h, grid, ty);
        for tx in 0..grid {
            let (x0, x1) = tile_bounds(w, grid, tx);
            let mut hist = [0f64; 256];
            for y in y0..y1 {
                for &v in &src[y * w + x0..y * w + x1] {
                    hist[v as usize] += 1.0;
                }
            }
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            // Fractional clipping keeps the mapping independent of tile size.
            let limit = clip_limit * n / 256.0;
            let mut excess = 0.0;
            for b in hist.iter_mut() {
                if *b > limit {
                    excess += *b - limit;
                    *b = limit;
                }
            }
            let lut = &mut luts[ty * grid + tx];
            let mut cdf = 0.0;
            for (v, &count) in hist.iter().enumerate() {
                cdf += count + excess / 256.0;
                lut[v] = clamp_u8(cdf * 255.0 / n);
            }
        }
    }

    // tile centres in pixel coordinates
    let centre = |len: usize, t: usize| {
        let (a, b) = tile_bounds(len, grid, t);
        (a + b) as f64 / 2.0 - 0.5
    };
    let locate = |len: usize, p: usize| -> (usize, usize, f64) {
        let pf = p as f64;
        if pf <= centre(len, 0) {
            return (0, 0, 0.0);
        }
        if pf >= centre(len, grid - 1) {
            return (grid - 1, grid - 1, 0.0);
        }
        let mut t = 0;
        while t + 1 < grid && centre(len, t + 1) <= pf {
            t += 1;
        }
        let (c0, c1) = (centre(len, t), centre(len, t + 1));
        (t, t + 1, (pf - c0) / (c1 - c0))
    };
    let xs: Vec<_> = (0..w).map(|x| locate(w, x)).collect();
    let mut out = vec![0u8; w * h];
    for y in 0..h {
        let (ty0, ty1, fy) = locate(h, y);
        for (x, &(tx0, tx1, fx)) in xs.iter().enumerate() {
            let v = src[y * w + x] as usize;
            let m = |ty: usize, tx: usize| luts[ty * grid + tx][v] as f64;
            let top = m(ty0, tx0) * (1.0 - fx) + m(ty0, tx1) * fx;
            let bottom = m(ty1, tx0) * (1.0 - fx) + m(ty1, tx1) * fx;
            out[y * w + x] = clamp_u8(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Per-channel first and second moments, R, G, B order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for ColorStats {
    /// Typical well-exposed fundus photograph.
    fn default() -> Self {
        Self {
            mean: [120.0, 60.0, 30.0],
            std: [40.0, 25.0, 15.0],
        }
    }
}

impl ColorStats {
    /// Population mean and standard deviation over the masked pixels.
    pub fn measure(img: &RgbImage, mask: &BinaryMask) -> Result<ColorStats> {
        same_dims(img.dims(), mask.dims())?;
        let mut sum = [0.0f64; 3];
        let mut n = 0usize;
        for (p, _) in img.pixels().zip(mask.data()).filter(|(_, &m)| m) {
            for c in 0..3 {
                sum[c] += p[c] as f64;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "fundus_mask",
                reason: "mask selects no pixels".into(),
            });
        }
        let mean = sum.map(|s| s / n as f64);
        let mut sq = [0.0f64; 3];
        for (p, _) in img.pixels().zip(mask.data()).filter(|(_, &m)| m) {
            for c in 0..3 {
                sq[c] += (p[c] as f64 - mean[c]).powi(2);
            }
        }
        Ok(ColorStats {
            mean,
            std: sq.map(|s| (s / n as f64).sqrt()),
        })
    }
}

/// Match the fundus pixels' per-channel mean and standard deviation to
/// `reference`. Pixels outside `fundus_mask` are left untouched.
pub fn color_normalize(img: &RgbImage, reference: &ColorStats, fundus_mask: &BinaryMask) -> Result<RgbImage> {
    if reference.std.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidParameter {
            name: "reference.std",
            reason: "every channel needs a positive standard deviation".into(),
        });
    }
    let stats = ColorStats::measure(img, fundus_mask)?;
    for (c, name) in ['R', 'G', 'B'].into_iter().enumerate() {
        if stats.std[c] == 0.0 {
            return Err(Error::ZeroVariance { channel: name });
        }
    }
    let mut out = img.data().to_vec();
    for (i, _) in fundus_mask.data().iter().enumerate().filter(|(_, &m)| m) {
        for c in 0..3 {
            let v = out[i * 3 + c] as f64;
            let z = (v - stats.mean[c]) / stats.std[c];
            out[i * 3 + c] = clamp_u8(z * reference.std[c] + reference.mean[c]);
        }
    }
    RgbImage::new(img.width(), img.height(), out)
}

/// Fundus field: max-channel intensity above 10 after a 5x5 median.
pub fn fundus_mask(img: &RgbImage) -> BinaryMask {
    let (w, h) = img.dims();
    let maxc: Vec<u8> = img.pixels().map(|p| p[0].max(p[1]).max(p[2])).collect();
    let mut data = Vec::with_capacity(w * h);
    let mut window = Vec::with_capacity(25);
    for y in 0..h as isize {
        for x in 0..w as isize {
            window.clear();
            for dy in -2..=2isize {
                let sy = (y + dy).clamp(0, h as isize - 1) as usize;
                for dx in -2..=2isize {
                    let sx = (x + dx).clamp(0, w as isize - 1) as usize;
                    window.push(maxc[sy * w + sx]);
                }
            }
            let (_, median, _) = window.select_nth_unstable(12);
            data.push(*median > 10);
        }
    }
    BinaryMask::new(w, h, data).expect("dimensions come from a valid image")
}

/// Arithmetic centre of the set pixels, `None` for an empty mask.
pub fn mask_centroid(mask: &BinaryMask) -> Option<(f64, f64)> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                sx += x as f64;
                sy += y as f64;
                n += 1;
            }
        }
    }
    (n > 0).then(|| (sx / n as f64, sy / n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianParams {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub mu_x: f64,
    pub mu_y: f64,
    /// Half-width `a`; the kernel spans `-a..=a` horizontally.
    pub radius_a: usize,
    /// Half-height `b`; the kernel spans `-b..=b` vertically.
    pub radius_b: usize,
}

impl Default for GaussianParams {
    fn default() -> Self {
        Self {
            sigma_x: 1.0,
            sigma_y: 1.0,
            mu_x: 0.0,
            mu_y: 0.0,
            radius_a: 3,
            radius_b: 3,
        }
    }
}

/// Odd-sized correlation kernel, indexed by offsets `(i, j)` from its centre.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Kernel {
    /// `values` is row-major: `height` rows of `width` entries.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Kernel> {
        if width.is_multiple_of(2) || height.is_multiple_of(2) {
            return Err(Error::EvenKernel {
                rows: height,
                cols: width,
            });
        }
        if values.len() != width * height {
            return Err(Error::InvalidParameter {
                name: "kernel",
                reason: format!("expected {} values, got {}", width * height, values.len()),
            });
        }
        Ok(Kernel { width, height, values })
    }

    pub fn identity() -> Kernel {
        Kernel::new(1, 1, vec![1.0]).unwrap()
    }

    pub fn half_width(&self) -> isize {
        (self.width / 2) as isize
    }

    pub fn half_height(&self) -> isize {
        (self.height / 2) as isize
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entry at horizontal offset `i` and vertical offset `j`.
    pub fn at(&self, i: isize, j: isize) -> f64 {
        let col = (i + self.half_width()) as usize;
        let row = (j + self.half_height()) as usize;
        self.values[row * self.width + col]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Normalized anisotropic Gaussian over offsets `i in -a..=a`, `j in -b..=b`.
pub fn gaussian_kernel(params: &GaussianParams) -> Result<Kernel> {
    for (name, s) in [("sigma_x", params.sigma_x), ("sigma_y", params.sigma_y)] {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidParameter {
                name,
                reason: format!("must be positive and finite, got {s}"),
            });
        }
    }
    if !params.mu_x.is_finite() || !params.mu_y.is_finite() {
        return Err(Error::InvalidParameter {
            name: "mu",
            reason: "must be finite".into(),
        });
    }
    let (a, b) = (params.radius_a as isize, params.radius_b as isize);
    let mut values = Vec::with_capacity(((2 * a + 1) * (2 * b + 1)) as usize);
    for j in -b..=b {
        for i in -a..=a {
            let dx = i as f64 - params.mu_x;
            let dy = j as f64 - params.mu_y;
            let e =
                dx * dx / (2.0 * params.sigma_x * params.sigma_x) + dy * dy / (2.0 * params.sigma_y * params.sigma_y);
            values.push((-e).exp());
        }
    }
    let sum: f64 = values.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::InvalidParameter {
            name: "mu",
            reason: "kernel underflows to zero; mean lies too far outside the support".into(),
        });
    }
    values.iter_mut().for_each(|v| *v /= sum);
    Kernel::new((2 * a + 1) as usize, (2 * b + 1) as usize, values)
}

/// `g(x, y) = sum_i sum_j f(x + i, y + j) * k(i, j)`, with edge replication.
///
/// This is correlation; no kernel flip is applied.
pub fn convolve2d(img: &Plane, kernel: &Kernel) -> Plane {
    let (w, h) = (img.width, img.height);
    let (a, b) = (kernel.half_width(), kernel.half_height());
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for j in -b..=b {
                for i in -a..=a {
                    acc += img.get_clamped(x + i, y + j) * kernel.at(i, j);
                }
            }
            out[y as usize * w + x as usize] = acc;
        }
    }
    Plane {
        width: w,
        height: h,
        data: out,
    }
}

pub fn gaussian_filter(img: &RgbImage, params: &GaussianParams) -> Result<RgbImage> {
    let kernel = gaussian_kernel(params)?;
    let planes: Vec<Plane> = (0..3).map(|c| convolve2d(&img.channel_plane(c), &kernel)).collect();
    RgbImage::from_planes([&planes[0], &planes[1], &planes[2]])
}

/// Morphological dilation by a Euclidean disc of radius `radius`.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let r = radius as isize;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
        .collect();
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let mut out = mask.clone();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x as usize, y as usize) {
                continue;
            }
            for &(dx, dy) in &offsets {
                let (nx, ny) = (x + dx, y + dy);
                if (0..w).contains(&nx) && (0..h).contains(&ny) {
                    out.set(nx as usize, ny as usize, true);
                }
            }
        }
    }
    out
}

/// Black out the region (dilated by `dilate_px`) on all channels.
pub fn remove_region(img: &RgbImage, region: &BinaryMask, dilate_px: usize) -> Result<RgbImage> {
    same_dims(img.dims(), region.dims())?;
    let grown = dilate(region, dilate_px);
    let mut out = img.data().to_vec();
    for (i, _) in grown.data().iter().enumerate().filter(|(_, &m)| m) {
        out[i * 3..i * 3 + 3].fill(0);
    }
    RgbImage::new(img.width(), img.height(), out)
}

fn lower_median(values: &mut [u8]) -> u8 {
    let mid = (values.len() - 1) / 2;
    *values.select_nth_unstable(mid).1
}

/// Inpaint vessel pixels with the per-channel median of the non-vessel
/// pixels in a `window x window` neighbourhood.
///
/// Windows without any non-vessel pixel double their half-size until one is
/// found; once the window covers the whole image the fundus-wide channel
/// median is used instead. Medians of even-sized samples take the lower
/// middle value.
pub fn remove_vessels(img: &RgbImage, vessels: &BinaryMask, window: usize) -> Result<RgbImage> {
    same_dims(img.dims(), vessels.dims())?;
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::InvalidParameter {
            name: "window",
            reason: format!("must be odd and at least 3, got {window}"),
        });
    }
    let (w, h) = img.dims();
    let src = img.data();
    let mut out = src.to_vec();
    let mut fallback: Option<[u8; 3]> = None;
    let mut samples: [Vec<u8>; 3] = Default::default();
    for y in 0..h {
        for x in 0..w {
            if !vessels.get(x, y) {
                continue;
            }
            let mut r = window / 2;
            let value = loop {
                samples.iter_mut().for_each(Vec::clear);
                let (x0, x1) = (x.saturating_sub(r), (x + r).min(w - 1));
                let (y0, y1) = (y.saturating_sub(r), (y + r).min(h - 1));
                for ny in y0..=y1 {
                    for nx in x0..=x1 {
                        if !vessels.get(nx, ny) {
                            let i = (ny * w + nx) * 3;
                            for c in 0..3 {
                                samples[c].push(src[i + c]);
                            }
                        }
                    }
                }
                if !samples[0].is_empty() {
                    break [0, 1, 2].map(|c| lower_median(&mut samples[c]));
                }
                if x0 == 0 && y0 == 0 && x1 == w - 1 && y1 == h - 1 {
                    break *fallback.get_or_insert_with(|| fundus_median(img, vessels));
                }
                r *= 2;
            };
            out[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&value);
        }
    }
    RgbImage::new(w, h, out)
}

fn fundus_median(img: &RgbImage, vessels: &BinaryMask) -> [u8; 3] {
    let fundus = fundus_mask(img);
    let mut samples: [Vec<u8>; 3] = Default::default();
    for (i, p) in img.pixels().enumerate() {
        if fundus.data()[i] && !vessels.data()[i] {
            for c in 0..3 {
                samples[c].push(p[c]);
            }
        }
    }
    if samples[0].is_empty() {
        return [0; 3];
    }
    [0, 1, 2].map(|c| lower_median(&mut samples[c]))
}

/// Parameters of the whole chain, in execution order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessParams {
    pub clahe: Option<ClaheParams>,
    pub color_reference: Option<ColorStats>,
    pub gaussian: Option<GaussianParams>,
    pub disc_dilate_px: usize,
    pub vessel_window: usize,
}

impl Default for PreprocessParams {
    fn default() -> Self {
        Self {
            clahe: Some(ClaheParams::default()),
            color_reference: Some(ColorStats::default()),
            gaussian: Some(GaussianParams::default()),
            disc_dilate_px: 3,
            vessel_window: 5,
        }
    }
}

/// equalize -> normalize -> filter -> remove disc -> inpaint vessels.
///
/// The fundus mask for normalization is derived from the input image.
pub fn run_chain(
    img: &RgbImage,
    params: &PreprocessParams,
    disc: Option<&BinaryMask>,
    vessels: Option<&BinaryMask>,
) -> Result<RgbImage> {
    let fundus = fundus_mask(img);
    let mut cur = img.clone();
    if let Some(c) = &params.clahe {
        cur = clahe_rgb(&cur, c.clip_limit, c.tile_grid)?;
    }
    if let Some(reference) = &params.color_reference {
        cur = color_normalize(&cur, reference, &fundus)?;
    }
    if let Some(g) = &params.gaussian {
        cur = gaussian_filter(&cur, g)?;
    }
    if let Some(d) = disc {
        cur = remove_region(&cur, d, params.disc_dilate_px)?;
    }
    if let Some(v) = vessels {
        cur = remove_vessels(&cur, v, params.vessel_window)?;
    }
    Ok(cur)
}
