//! Raster and probability-mask types plus their on-disk formats.
//!
//! Rasters are read from PNG or binary PPM (P6) and written as either,
//! chosen by file extension. Probability masks use the PFMAP layout:
//!
//! ```text
//! "PFM1" | width: u32 LE | height: u32 LE | reserved: u32 = 0 | width*height f32 LE
//! ```
//!
//! Payload is row-major with a top-left origin.

use std::fs;
use std::io::{BufReader, Cursor};
use std::path::Path;

use crate::error::{Error, Result};

const PFMAP_MAGIC: &[u8; 4] = b"PFM1";
const PFMAP_HEADER_LEN: usize = 16;

fn check_dims(width: usize, height: usize) -> Result<usize> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions {
            width,
            height,
            reason: "width and height must be positive".into(),
        });
    }
    width.checked_mul(height).ok_or(Error::InvalidDimensions {
        width,
        height,
        reason: "pixel count overflows".into(),
    })
}

/// 8-bit RGB raster, row-major `[r, g, b, r, g, b, ...]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        let n = check_dims(width, height)?;
        if data.len() != n * 3 {
            return Err(Error::InvalidDimensions {
                width,
                height,
                reason: format!("expected {} bytes, got {}", n * 3, data.len()),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let n = check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: rgb.iter().copied().cycle().take(n * 3).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// One channel (0 = R, 1 = G, 2 = B) as a plane of reals.
    pub fn channel_plane(&self, c: usize) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().skip(c).step_by(3).map(|&v| v as f64).collect(),
        }
    }

    /// Rebuild an image from three planes, rounding and clamping to 8 bits.
    pub fn from_planes(planes: [&Plane; 3]) -> Result<Self> {
        let (w, h) = (planes[0].width, planes[0].height);
        for p in &planes[1..] {
            if (p.width, p.height) != (w, h) {
                return Err(Error::DimensionMismatch {
                    left: (w, h),
                    right: (p.width, p.height),
                });
            }
        }
        let mut data = Vec::with_capacity(w * h * 3);
        for i in 0..w * h {
            for p in &planes {
                data.push(clamp_u8(p.data[i]));
            }
        }
        RgbImage::new(w, h, data)
    }

    pub fn to_rgba(&self) -> Vec<u8> {
        self.data
            .chunks_exact(3)
            .flat_map(|p| [p[0], p[1], p[2], 255])
            .collect()
    }
}

pub(crate) fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        let n = check_dims(width, height)?;
        if data.len() != n {
            return Err(Error::InvalidDimensions {
                width,
                height,
                reason: format!("expected {n} bytes, got {}", data.len()),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Replicates each gray level into all three channels.
    pub fn to_rgb(&self) -> RgbImage {
        RgbImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().flat_map(|&g| [g, g, g]).collect(),
        }
    }

    /// Nearest-neighbour resample.
    pub fn resize_nearest(&self, width: usize, height: usize) -> Result<GrayImage> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            let sy = y * self.height / height;
            for x in 0..width {
                let sx = x * self.width / width;
                data.push(self.data[sy * self.width + sx]);
            }
        }
        GrayImage::new(width, height, data)
    }
}

/// Per-pixel lesion probability, every value finite and in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMask {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ProbMask {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        let n = check_dims(width, height)?;
        if data.len() != n {
            return Err(Error::InvalidDimensions {
                width,
                height,
                reason: format!("expected {n} values, got {}", data.len()),
            });
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange {
                path: "<memory>".into(),
                index,
                value,
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        let n = check_dims(width, height)?;
        if data.len() != n {
            return Err(Error::InvalidDimensions {
                width,
                height,
                reason: format!("expected {n} values, got {}", data.len()),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        let n = check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            data: vec![false; n],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        same_dims(self.dims(), other.dims())?;
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect(),
        })
    }
}

pub(crate) fn same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { left: a, right: b })
    }
}

/// Real-valued raster used by the filtering code.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        let n = check_dims(width, height)?;
        if data.len() != n {
            return Err(Error::InvalidDimensions {
                width,
                height,
                reason: format!("expected {n} values, got {}", data.len()),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample with edge replication for out-of-range coordinates.
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }
}

/// ITU-R BT.601 luma, rounded to nearest.
pub fn to_gray(img: &RgbImage) -> GrayImage {
    let data = img
        .pixels()
        .map(|[r, g, b]| clamp_u8(0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64))
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn is_ppm(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()),
        Some(ref e) if e == "ppm"
    )
}

/// Load a PNG or binary PPM. The format is sniffed from the content.
pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    decode_rgb(&bytes, path)
}

pub fn decode_rgb(bytes: &[u8], path: &Path) -> Result<RgbImage> {
    if bytes.starts_with(b"P6") {
        decode_ppm(bytes, path)
    } else if bytes.starts_with(b"\x89PNG") {
        let (w, h, channels, data) = decode_png(bytes, path)?;
        let rgb = match channels {
            1 => data.iter().flat_map(|&g| [g, g, g]).collect(),
            2 => data.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
            3 => data,
            4 => data.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            n => {
                return Err(Error::MalformedHeader {
                    path: path.into(),
                    reason: format!("unsupported channel count {n}"),
                })
            }
        };
        RgbImage::new(w, h, rgb)
    } else {
        Err(Error::MalformedHeader {
            path: path.into(),
            reason: "neither PNG nor binary PPM (P6)".into(),
        })
    }
}

/// Save as PPM when the extension is `.ppm`, PNG otherwise.
pub fn save_rgb(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if is_ppm(path) {
        encode_ppm(img)
    } else {
        encode_png(img.width, img.height, png::ColorType::Rgb, &img.data, path)?
    };
    write_file(path, &bytes)
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

fn decode_ppm(bytes: &[u8], path: &Path) -> Result<RgbImage> {
    let malformed = |reason: &str| Error::MalformedHeader {
        path: path.into(),
        reason: reason.into(),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(malformed("header ends early")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(malformed("expected a decimal number"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed("number out of range"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(malformed("missing whitespace after maxval"));
    }
    pos += 1;
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(malformed("only maxval 255 is supported"));
    }
    if w == 0 || h == 0 {
        return Err(malformed("zero dimension"));
    }
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| malformed("dimensions overflow"))?;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            found: payload.len(),
        });
    }
    RgbImage::new(w, h, payload[..expected].to_vec())
}

fn png_error(path: &Path, e: png::DecodingError) -> Error {
    match e {
        png::DecodingError::IoError(ref io) if io.kind() == std::io::ErrorKind::UnexpectedEof => Error::Truncated {
            path: path.into(),
            expected: 0,
            found: 0,
        },
        other => Error::MalformedHeader {
            path: path.into(),
            reason: other.to_string(),
        },
    }
}

/// Decode to 8-bit samples; returns `(width, height, channels, data)`.
fn decode_png(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let mut decoder = png::Decoder::new(BufReader::new(Cursor::new(bytes)));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| png_error(path, e))?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::MalformedHeader {
        path: path.into(),
        reason: "image too large".into(),
    })?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| png_error(path, e))?;
    buf.truncate(info.buffer_size());
    let channels = info.color_type.samples();
    let (w, h) = (info.width as usize, info.height as usize);
    // drop any row padding
    let row = w * channels;
    let data = if info.line_size == row {
        buf
    } else {
        buf.chunks(info.line_size).flat_map(|r| r[..row].to_vec()).collect()
    };
    Ok((w, h, channels, data))
}

fn encode_png(width: usize, height: usize, color: png::ColorType, data: &[u8], path: &Path) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let to_err = |e: png::EncodingError| Error::Io {
        path: path.into(),
        source: std::io::Error::other(e),
    };
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(to_err)?;
        writer.write_image_data(data).map_err(to_err)?;
    }
    Ok(out)
}

pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(img.width, img.height, png::ColorType::Grayscale, &img.data, path)?;
    write_file(path, &bytes)
}

pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    Ok(to_gray(&load_rgb(path)?))
}

/// Binary masks are 8-bit grayscale PNG, 0 background and 255 foreground.
/// Any nonzero sample reads back as foreground.
pub fn save_binary_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let data: Vec<u8> = mask.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let bytes = encode_png(mask.width, mask.height, png::ColorType::Grayscale, &data, path)?;
    write_file(path, &bytes)
}

pub fn load_binary_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    if !bytes.starts_with(b"\x89PNG") {
        return Err(Error::MalformedHeader {
            path: path.into(),
            reason: "binary masks must be PNG".into(),
        });
    }
    let (w, h, channels, data) = decode_png(&bytes, path)?;
    let data = data
        .chunks_exact(channels)
        .map(|p| p.iter().take(channels.min(3)).any(|&v| v != 0))
        .collect();
    BinaryMask::new(w, h, data)
}

pub fn encode_probmask(mask: &ProbMask) -> Vec<u8> {
    let mut out = Vec::with_capacity(PFMAP_HEADER_LEN + mask.data.len() * 4);
    out.extend_from_slice(PFMAP_MAGIC);
    out.extend_from_slice(&(mask.width as u32).to_le_bytes());
    out.extend_from_slice(&(mask.height as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in &mask.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_probmask(bytes: &[u8], path: &Path) -> Result<ProbMask> {
    if bytes.len() < PFMAP_HEADER_LEN || &bytes[..4] != PFMAP_MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: "PFM1",
        });
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (w, h) = (word(4) as u64, word(8) as u64);
    let overflow = Error::DimensionOverflow {
        path: path.into(),
        width: w,
        height: h,
    };
    if w == 0 || h == 0 {
        return Err(overflow);
    }
    let n = w
        .checked_mul(h)
        .filter(|n| n.checked_mul(4).is_some_and(|b| b <= usize::MAX as u64))
        .ok_or(overflow)? as usize;
    let payload = &bytes[PFMAP_HEADER_LEN..];
    if payload.len() != n * 4 {
        return Err(Error::Truncated {
            path: path.into(),
            expected: n * 4,
            found: payload.len(),
        });
    }
    let mut data = Vec::with_capacity(n);
    for (index, chunk) in payload.chunks_exact(4).enumerate() {
        let value = f32::from_le_bytes(chunk.try_into().unwrap());
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::OutOfRange {
                path: path.into(),
                index,
                value,
            });
        }
        data.push(value);
    }
    Ok(ProbMask {
        width: w as usize,
        height: h as usize,
        data,
    })
}

pub fn load_probmask(path: impl AsRef<Path>) -> Result<ProbMask> {
    let path = path.as_ref();
    decode_probmask(&read_file(path)?, path)
}

pub fn save_probmask(mask: &ProbMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_file(path, &encode_probmask(mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn decodes_two_pixel_ppm() {
        let dir = tmp();
        let p = dir.path().join("a.ppm");
        let mut bytes = b"P6\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0, 0, 0, 255]);
        fs::write(&p, bytes).unwrap();
        let img = load_rgb(&p).unwrap();
        assert_eq!(img.dims(), (2, 1));
        assert_eq!(img.data(), &[255, 0, 0, 0, 0, 255]);
    }

    #[test]
    fn ppm_header_comments_are_skipped() {
        let bytes = b"P6 # made by hand\n1 1\n255\n\x01\x02\x03";
        let img = decode_rgb(bytes, Path::new("x.ppm")).unwrap();
        assert_eq!(img.data(), &[1, 2, 3]);
    }

    #[test]
    fn empty_file_is_malformed_header() {
        let dir = tmp();
        let p = dir.path().join("empty.ppm");
        fs::write(&p, b"").unwrap();
        let err = load_rgb(&p).unwrap_err();
        assert!(
            matches!(err, Error::MalformedHeader { ref path, .. } if path == &p),
            "{err}"
        );
    }

    #[test]
    fn missing_and_truncated_are_distinct() {
        let dir = tmp();
        let missing = dir.path().join("nope.png");
        assert!(matches!(load_rgb(&missing), Err(Error::MissingFile { .. })));
        let p = dir.path().join("short.ppm");
        fs::write(&p, b"P6\n4 4\n255\n\x00\x00").unwrap();
        assert!(matches!(
            load_rgb(&p),
            Err(Error::Truncated {
                expected: 48,
                found: 2,
                ..
            })
        ));
        let png = dir.path().join("short.png");
        let full = encode_png(8, 8, png::ColorType::Rgb, &[7; 192], &png).unwrap();
        fs::write(&png, &full[..full.len() / 2]).unwrap();
        assert!(load_rgb(&png).is_err());
    }

    #[test]
    fn black_pixel_ppm_payload() {
        let img = RgbImage::filled(1, 1, [0, 0, 0]).unwrap();
        let bytes = encode_ppm(&img);
        assert_eq!(&bytes[bytes.len() - 3..], &[0, 0, 0]);
        assert_eq!(bytes.len(), b"P6\n1 1\n255\n".len() + 3);
    }

    #[test]
    fn zero_width_rejected() {
        assert!(matches!(
            RgbImage::new(0, 3, vec![]),
            Err(Error::InvalidDimensions { .. })
        ));
        assert!(RgbImage::filled(0, 1, [0; 3]).is_err());
    }

    #[test]
    fn gray_conversion() {
        let img = RgbImage::new(3, 1, vec![255, 255, 255, 0, 0, 0, 255, 0, 0]).unwrap();
        assert_eq!(to_gray(&img).data(), &[255, 0, 76]);
    }

    #[test]
    fn gray_embedding_is_identity() {
        let g = GrayImage::new(256, 1, (0..=255).collect()).unwrap();
        assert_eq!(to_gray(&g.to_rgb()), g);
    }

    #[test]
    fn pfmap_layout() {
        let mask = ProbMask::new(4, 4, vec![0.0; 16]).unwrap();
        let bytes = encode_probmask(&mask);
        assert_eq!(bytes.len(), 16 + 64);
        assert_eq!(&bytes[..4], b"PFM1");
        assert_eq!(&bytes[4..8], &4u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &[0; 4]);
        assert!(bytes[16..].iter().all(|&b| b == 0));
    }

    #[test]
    fn pfmap_half_values() {
        let dir = tmp();
        let p = dir.path().join("m.pfmap");
        save_probmask(&ProbMask::new(2, 2, vec![0.5; 4]).unwrap(), &p).unwrap();
        let m = load_probmask(&p).unwrap();
        assert_eq!(m.data(), &[0.5; 4]);
    }

    #[test]
    fn pfmap_rejects_out_of_range() {
        let mut bytes = b"PFM1".to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        bytes.extend_from_slice(&1.5f32.to_le_bytes());
        let err = decode_probmask(&bytes, Path::new("m")).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { index: 0, .. }), "{err}");

        let mut nan = bytes[..16].to_vec();
        nan.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            decode_probmask(&nan, Path::new("m")),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn pfmap_bad_magic_and_overflow() {
        assert!(matches!(
            decode_probmask(b"PFM2xxxxxxxxxxxx", Path::new("m")),
            Err(Error::BadMagic { .. })
        ));
        let mut bytes = b"PFM1".to_vec();
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        let err = decode_probmask(&bytes, Path::new("m")).unwrap_err();
        assert!(
            matches!(err, Error::DimensionOverflow { .. } | Error::Truncated { .. }),
            "{err}"
        );
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let dir = tmp();
        let p = dir.path().join("no/such/dir/m.pfmap");
        let err = save_probmask(&ProbMask::new(1, 1, vec![0.0]).unwrap(), &p).unwrap_err();
        assert!(matches!(err, Error::MissingFile { .. } | Error::Io { .. }));
    }

    #[test]
    fn binary_mask_png_round_trip() {
        let dir = tmp();
        let p = dir.path().join("m.png");
        let mask = BinaryMask::new(3, 2, vec![true, false, false, true, true, false]).unwrap();
        save_binary_mask(&mask, &p).unwrap();
        assert_eq!(load_binary_mask(&p).unwrap(), mask);
    }

    fn arb_rgb() -> impl Strategy<Value = RgbImage> {
        (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<u8>(), w * h * 3).prop_map(move |d| RgbImage::new(w, h, d).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn rgb_round_trips_through_both_formats(img in arb_rgb()) {
            let dir = tmp();
            for name in ["i.png", "i.ppm"] {
                let p = dir.path().join(name);
                save_rgb(&img, &p).unwrap();
                prop_assert_eq!(&load_rgb(&p).unwrap(), &img);
            }
        }

        #[test]
        fn probmask_round_trips_bit_exactly(
            (w, h, vals) in (1usize..10, 1usize..10)
                .prop_flat_map(|(w, h)| (Just(w), Just(h), proptest::collection::vec(0.0f32..=1.0, w * h)))
        ) {
            let m = ProbMask::new(w, h, vals).unwrap();
            let back = decode_probmask(&encode_probmask(&m), Path::new("m")).unwrap();
            let a: Vec<u32> = m.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
