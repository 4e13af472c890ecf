//! Binary PGM (P5) and PPM (P6) images with maxval 255, masks stored as PGM,
//! and atomic file writes.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{GrayImage, RgbImage};
use crate::region::RegionMask;

/// A decoded frame. Color input keeps its planes next to the luminance image.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub gray: GrayImage,
    pub rgb: Option<RgbImage>,
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    /// Offset of the first payload byte.
    offset: usize,
}

fn parse_header(bytes: &[u8]) -> std::result::Result<Header, String> {
    if bytes.len() < 2 || bytes[0] != b'P' || !matches!(bytes[1], b'5' | b'6') {
        return Err("expected P5 or P6 magic".into());
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // Whitespace and `#` comments may separate header fields.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let name = ["width", "height", "maxval"][i];
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text.parse().map_err(|_| format!("missing or bad {name}"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("header must end with a single whitespace byte".into());
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}, only 255 is handled"));
    }
    if width == 0 || height == 0 {
        return Err("zero image dimension".into());
    }
    Ok(Header { magic: [bytes[0], bytes[1]], width, height, offset: pos + 1 })
}

/// Decodes P5 or P6 bytes; `path` only labels errors.
pub fn decode_pnm(bytes: &[u8], path: &Path) -> Result<Frame> {
    let bad = |reason: String| Error::ImageFormat { path: path.to_path_buf(), reason };
    let h = parse_header(bytes).map_err(bad)?;
    let channels = if h.magic[1] == b'5' { 1 } else { 3 };
    let need = h.width * h.height * channels;
    let payload = &bytes[h.offset..];
    if payload.len() < need {
        return Err(bad(format!("truncated payload: {} of {need} bytes", payload.len())));
    }
    let payload = &payload[..need];
    if channels == 1 {
        let data = payload.iter().map(|&v| v as f64).collect();
        Ok(Frame { gray: GrayImage::new(h.width, h.height, data)?, rgb: None })
    } else {
        let rgb = RgbImage { width: h.width, height: h.height, data: payload.to_vec() };
        Ok(Frame { gray: rgb.to_gray(), rgb: Some(rgb) })
    }
}

pub fn load_frame(path: &Path) -> Result<Frame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes, path)
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_u8());
    out
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

/// Writes through a temporary file in the same directory, then renames it
/// over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn save_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    write_atomic(path, &encode_pgm(img))
}

pub fn save_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    write_atomic(path, &encode_ppm(img))
}

/// Mask from a gray image: nonzero pixels are inside.
pub fn mask_from_gray(img: &GrayImage) -> RegionMask {
    RegionMask::from_fn(img.width(), img.height(), |x, y| img.get(x, y) > 0.0)
}

pub fn mask_to_gray(mask: &RegionMask) -> GrayImage {
    GrayImage::from_fn(mask.width(), mask.height(), |x, y| if mask.contains(x, y) { 255.0 } else { 0.0 })
}

pub fn load_mask(path: &Path) -> Result<RegionMask> {
    Ok(mask_from_gray(&load_frame(path)?.gray))
}

pub fn save_mask(path: &Path, mask: &RegionMask) -> Result<()> {
    save_pgm(path, &mask_to_gray(mask))
}

/// Frame drawn in gray with the contour pixels in red.
pub fn contour_overlay(img: &GrayImage, contour: &[(usize, usize)]) -> RgbImage {
    let mut rgb = RgbImage::from_gray(img);
    for &(x, y) in contour {
        rgb.put(x, y, [255, 0, 0]);
    }
    rgb
}
