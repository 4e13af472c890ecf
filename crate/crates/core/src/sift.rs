//! Dense SIFT descriptors and Tensor-SIFT feature images.
//!
//! Every pixel gets a 4×4×8 descriptor computed in the image frame (no
//! keypoint detection, no dominant-orientation normalization). The 8×8
//! sampling window covers offsets `-4..=3` around the pixel; subwindow
//! centers sit at offsets −3, −1, +1, +3. Each sample's Gaussian-weighted
//! gradient magnitude is split trilinearly over the two nearest phase bins
//! and the neighbouring subwindows. Samples beyond the outermost subwindow
//! centers give their whole spatial weight to the edge subwindow, so the
//! descriptor mass always equals the weighted magnitude mass of the window.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::tensor::{CpBasis, Tensor4};

pub const SUBWINDOWS: usize = 4;
pub const PHASE_BINS: usize = 8;
pub const DESCRIPTOR_LEN: usize = SUBWINDOWS * SUBWINDOWS * PHASE_BINS;
/// Half the sampling window; also the replicate-padding width.
pub const WINDOW_HALF: usize = 4;

/// Per-pixel gradient magnitude and phase in `[0, 2π)`, measured
/// counterclockwise from +x with y growing with the row index.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f64>,
    pub phase: Vec<f64>,
}

/// Central differences inside, one-sided differences on the border.
pub fn gradient_field(img: &GrayImage) -> Result<GradientField> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::ImageTooSmall { width: w, height: h, min: 3 });
    }
    let diff = |lo: f64, mid: f64, hi: f64, at_lo: bool, at_hi: bool| {
        if at_lo {
            hi - mid
        } else if at_hi {
            mid - lo
        } else {
            0.5 * (hi - lo)
        }
    };
    let mut magnitude = vec![0.0; w * h];
    let mut phase = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let c = img.get(x, y);
            let gx = diff(
                if x > 0 { img.get(x - 1, y) } else { c },
                c,
                if x + 1 < w { img.get(x + 1, y) } else { c },
                x == 0,
                x + 1 == w,
            );
            let gy = diff(
                if y > 0 { img.get(x, y - 1) } else { c },
                c,
                if y + 1 < h { img.get(x, y + 1) } else { c },
                y == 0,
                y + 1 == h,
            );
            let i = y * w + x;
            magnitude[i] = gx.hypot(gy);
            let mut th = gy.atan2(gx);
            if th < 0.0 {
                th += TAU;
            }
            if th >= TAU {
                th = 0.0;
            }
            phase[i] = th;
        }
    }
    Ok(GradientField { width: w, height: h, magnitude, phase })
}

/// A 4×4×8 descriptor indexed by (subwindow-x, subwindow-y, phase bin).
#[derive(Debug, Clone, PartialEq)]
pub struct SiftDescriptor {
    pub bins: [f64; DESCRIPTOR_LEN],
}

impl SiftDescriptor {
    pub fn zeros() -> Self {
        SiftDescriptor { bins: [0.0; DESCRIPTOR_LEN] }
    }

    #[inline]
    pub fn index(sx: usize, sy: usize, bin: usize) -> usize {
        (sx * SUBWINDOWS + sy) * PHASE_BINS + bin
    }

    #[inline]
    pub fn get(&self, sx: usize, sy: usize, bin: usize) -> f64 {
        self.bins[Self::index(sx, sy, bin)]
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().sum()
    }

    /// The descriptor as a mode-1 unfolding row (subwindow-x fastest, phase slowest).
    pub fn mode1_row(&self) -> Vec<f64> {
        let mut row = vec![0.0; DESCRIPTOR_LEN];
        for sx in 0..SUBWINDOWS {
            for sy in 0..SUBWINDOWS {
                for b in 0..PHASE_BINS {
                    row[sx + SUBWINDOWS * (sy + SUBWINDOWS * b)] = self.get(sx, sy, b);
                }
            }
        }
        row
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiftParams {
    /// Gaussian weighting σ in samples.
    pub gaussian_sigma: f64,
    /// Lowe-style normalize/clip/renormalize with this clip level. Off by default.
    pub clip: Option<f64>,
}

impl Default for SiftParams {
    fn default() -> Self {
        SiftParams { gaussian_sigma: WINDOW_HALF as f64, clip: None }
    }
}

/// Splits a continuous subwindow coordinate into (index, weight) pairs,
/// clamping at the outer subwindows.
#[inline]
fn spatial_split(coord: f64) -> [(usize, f64); 2] {
    let last = (SUBWINDOWS - 1) as f64;
    if coord <= 0.0 {
        [(0, 1.0), (0, 0.0)]
    } else if coord >= last {
        [(SUBWINDOWS - 1, 1.0), (SUBWINDOWS - 1, 0.0)]
    } else {
        let f0 = coord.floor();
        let fr = coord - f0;
        let i0 = f0 as usize;
        [(i0, 1.0 - fr), (i0 + 1, fr)]
    }
}

#[inline]
fn phase_split(phase: f64) -> [(usize, f64); 2] {
    let b = phase / (TAU / PHASE_BINS as f64);
    let b0 = b.floor();
    let fr = b - b0;
    let i0 = (b0 as usize) % PHASE_BINS;
    [(i0, 1.0 - fr), ((i0 + 1) % PHASE_BINS, fr)]
}

/// Precomputed padded gradient field for descriptor extraction.
pub struct SiftExtractor {
    grad: GradientField,
    weights: [[f64; 2 * WINDOW_HALF]; 2 * WINDOW_HALF],
    params: SiftParams,
    width: usize,
    height: usize,
}

impl SiftExtractor {
    pub fn new(img: &GrayImage, params: SiftParams) -> Result<Self> {
        let padded = img.pad_replicate(WINDOW_HALF);
        let grad = gradient_field(&padded)?;
        let mut weights = [[0.0; 2 * WINDOW_HALF]; 2 * WINDOW_HALF];
        let s2 = 2.0 * params.gaussian_sigma * params.gaussian_sigma;
        for (iy, row) in weights.iter_mut().enumerate() {
            for (ix, w) in row.iter_mut().enumerate() {
                let ox = ix as f64 - WINDOW_HALF as f64;
                let oy = iy as f64 - WINDOW_HALF as f64;
                *w = (-(ox * ox + oy * oy) / s2).exp();
            }
        }
        Ok(SiftExtractor { grad, weights, params, width: img.width(), height: img.height() })
    }

    /// Gaussian weight of window sample at offset `(ox, oy)`, offsets in `-4..=3`.
    pub fn weight(&self, ox: isize, oy: isize) -> f64 {
        let h = WINDOW_HALF as isize;
        self.weights[(oy + h) as usize][(ox + h) as usize]
    }

    /// (magnitude, phase) of the gradient at image pixel `(x + ox, y + oy)`,
    /// read from the padded field.
    pub fn sample(&self, x: usize, y: usize, ox: isize, oy: isize) -> (f64, f64) {
        let px = (x + WINDOW_HALF) as isize + ox;
        let py = (y + WINDOW_HALF) as isize + oy;
        let i = py as usize * self.grad.width + px as usize;
        (self.grad.magnitude[i], self.grad.phase[i])
    }

    pub fn descriptor(&self, x: usize, y: usize) -> SiftDescriptor {
        debug_assert!(x < self.width && y < self.height);
        let mut d = SiftDescriptor::zeros();
        let h = WINDOW_HALF as isize;
        for oy in -h..h {
            for ox in -h..h {
                let (mag, phase) = self.sample(x, y, ox, oy);
                if mag == 0.0 {
                    continue;
                }
                let m = mag * self.weight(ox, oy);
                let xs = spatial_split((ox as f64 + 3.0) / 2.0);
                let ys = spatial_split((oy as f64 + 3.0) / 2.0);
                let ps = phase_split(phase);
                for &(sx, wx) in &xs {
                    if wx == 0.0 {
                        continue;
                    }
                    for &(sy, wy) in &ys {
                        if wy == 0.0 {
                            continue;
                        }
                        for &(b, wb) in &ps {
                            d.bins[SiftDescriptor::index(sx, sy, b)] += m * wx * wy * wb;
                        }
                    }
                }
            }
        }
        if let Some(clip) = self.params.clip {
            normalize_clip(&mut d, clip);
        }
        d
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

fn normalize_clip(d: &mut SiftDescriptor, clip: f64) {
    let norm = |d: &SiftDescriptor| d.bins.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n = norm(d);
    if n == 0.0 {
        return;
    }
    for v in d.bins.iter_mut() {
        *v = (*v / n).min(clip);
    }
    let n = norm(d);
    if n > 0.0 {
        for v in d.bins.iter_mut() {
            *v /= n;
        }
    }
}

/// Descriptor at pixel `(x, y)` of a replicate-padded copy of `img`.
pub fn sift_at(img: &GrayImage, x: usize, y: usize) -> Result<SiftDescriptor> {
    if x >= img.width() || y >= img.height() {
        return Err(Error::DimensionMismatch(format!(
            "pixel ({x}, {y}) outside {}x{} image",
            img.width(),
            img.height()
        )));
    }
    Ok(SiftExtractor::new(img, SiftParams::default())?.descriptor(x, y))
}

/// Descriptors of every pixel stacked row-major into a `(W·H) × 4 × 4 × 8` tensor.
pub fn dense_sift(img: &GrayImage) -> Result<Tensor4> {
    dense_sift_with(img, SiftParams::default())
}

pub fn dense_sift_with(img: &GrayImage, params: SiftParams) -> Result<Tensor4> {
    let ex = SiftExtractor::new(img, params)?;
    let w = img.width();
    let mut data = vec![0.0; w * img.height() * DESCRIPTOR_LEN];
    data.par_chunks_mut(w * DESCRIPTOR_LEN).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let d = ex.descriptor(x, y);
            row[x * DESCRIPTOR_LEN..(x + 1) * DESCRIPTOR_LEN].copy_from_slice(&d.bins);
        }
    });
    Tensor4::from_vec([w * img.height(), SUBWINDOWS, SUBWINDOWS, PHASE_BINS], data)
}

/// Per-pixel K-channel feature map, interleaved (`(y * width + x) * K + k`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels || channels == 0 {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height}x{channels} feature image cannot hold {} values",
                data.len()
            )));
        }
        Ok(FeatureImage { width, height, channels, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        self.pixel_at(y * self.width + x)
    }

    #[inline]
    pub fn pixel_at(&self, idx: usize) -> &[f64] {
        &self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    pub fn channel_plane(&self, k: usize) -> Vec<f64> {
        self.data.iter().skip(k).step_by(self.channels).copied().collect()
    }

    /// Per-channel affine rescale to `[0, 255]`; constant channels become 0.
    pub fn rescale_channels(&mut self) {
        for k in 0..self.channels {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for v in self.data.iter().skip(k).step_by(self.channels) {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
            let span = hi - lo;
            let constant = !(span > 1e-12 * lo.abs().max(hi.abs()).max(1.0));
            let scale = if constant { 0.0 } else { 255.0 / span };
            for v in self.data.iter_mut().skip(k).step_by(self.channels) {
                *v = if constant { 0.0 } else { (*v - lo) * scale };
            }
        }
    }
}

/// Projection of every pixel's descriptor onto `basis`, before rescaling.
pub fn project_image(img: &GrayImage, basis: &CpBasis) -> Result<FeatureImage> {
    if basis.dims() != (SUBWINDOWS, SUBWINDOWS, PHASE_BINS) {
        return Err(Error::DimensionMismatch(format!(
            "basis dims {:?} do not match 4x4x8 descriptors",
            basis.dims()
        )));
    }
    let ex = SiftExtractor::new(img, SiftParams::default())?;
    let (w, k) = (img.width(), basis.rank());
    let mut data = vec![0.0; w * img.height() * k];
    data.par_chunks_mut(w * k).enumerate().try_for_each(|(y, row)| -> Result<()> {
        for x in 0..w {
            let f = basis.project_row(&ex.descriptor(x, y).mode1_row())?;
            row[x * k..(x + 1) * k].copy_from_slice(&f);
        }
        Ok(())
    })?;
    FeatureImage::new(w, img.height(), k, data)
}

/// Tensor-SIFT image: per-pixel projection, then per-channel rescale to `[0, 255]`.
pub fn tensor_sift_image(img: &GrayImage, basis: &CpBasis) -> Result<FeatureImage> {
    let mut fi = project_image(img, basis)?;
    fi.rescale_channels();
    Ok(fi)
}
