//! Inter-frame initialization: direct least-squares ellipse fitting and
//! mean-shift relocation of an elliptical window.

use nalgebra::{Matrix3, Vector3};

use crate::ellipse::Ellipse;
use crate::error::{Error, Result};
use crate::sift::FeatureImage;
use crate::textfmt::Lines;

pub const ENLARGE_FACTOR: f64 = 1.2;
pub const MEAN_SHIFT_BINS: usize = 16;
pub const MEAN_SHIFT_MAX_ITERS: usize = 10;
pub const MEAN_SHIFT_TOL: f64 = 0.5;
/// Largest channel count the joint histogram supports (`16^5` bins).
pub const MEAN_SHIFT_MAX_CHANNELS: usize = 5;

/// Scales both radii by `factor`; center and orientation are kept.
pub fn enlarge(e: &Ellipse, factor: f64) -> Ellipse {
    e.enlarge(factor)
}

/// Direct least-squares ellipse fit. Degenerate inputs (fewer than six
/// points, collinear or non-elliptical sets) fall back to the ellipse
/// inscribed in the bounding box.
pub fn fit_ellipse(points: &[(f64, f64)]) -> Result<Ellipse> {
    if points.is_empty() {
        return Err(Error::EmptyRegion);
    }
    match fit_conic(points).and_then(conic_to_ellipse) {
        Some(e) => Ok(e),
        None => {
            log::warn!("ellipse fit degenerate on {} points; using bounding-box ellipse", points.len());
            Ok(bounding_box_ellipse(points))
        }
    }
}

pub fn bounding_box_ellipse(points: &[(f64, f64)]) -> Ellipse {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    // Half a pixel keeps single rows or columns of pixels non-degenerate.
    let a = ((x1 - x0) / 2.0).max(0.5);
    let b = ((y1 - y0) / 2.0).max(0.5);
    Ellipse { cx: (x0 + x1) / 2.0, cy: (y0 + y1) / 2.0, a, b, theta: 0.0 }.canonical()
}

/// Conic `[A, B, C, D, E, F]` in the original coordinates, via the 3×3
/// reduction of the constrained generalized eigenproblem.
fn fit_conic(points: &[(f64, f64)]) -> Option<[f64; 6]> {
    if points.len() < 6 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let rms = (points.iter().map(|p| (p.0 - mx).powi(2) + (p.1 - my).powi(2)).sum::<f64>() / n).sqrt();
    if !(rms > 1e-12) {
        return None;
    }
    let s = rms / std::f64::consts::SQRT_2;

    let mut s1 = Matrix3::zeros();
    let mut s2 = Matrix3::zeros();
    let mut s3 = Matrix3::zeros();
    for &(px, py) in points {
        let (x, y) = ((px - mx) / s, (py - my) / s);
        let d1 = Vector3::new(x * x, x * y, y * y);
        let d2 = Vector3::new(x, y, 1.0);
        s1 += d1 * d1.transpose();
        s2 += d1 * d2.transpose();
        s3 += d2 * d2.transpose();
    }
    let t = -s3.try_inverse()? * s2.transpose();
    let m = s1 + s2 * t;
    // Premultiply by the inverse of the constraint block [[0,0,2],[0,-1,0],[2,0,0]].
    let reduced = Matrix3::from_rows(&[m.row(2) / 2.0, -m.row(1), m.row(0) / 2.0]);

    let eig = reduced.schur().eigenvalues()?;
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for lambda in eig.iter() {
        let v = null_vector(&(reduced - Matrix3::identity() * *lambda))?;
        let cond = 4.0 * v[0] * v[2] - v[1] * v[1];
        if cond > 0.0 && best.as_ref().is_none_or(|(c, _)| cond > *c) {
            best = Some((cond, v));
        }
    }
    let (_, a1) = best?;
    let a2 = t * a1;
    let (a, b, c, d, e, f) = (a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]);

    // Undo x' = (x - mx) / s.
    let s2i = 1.0 / (s * s);
    let (ao, bo, co) = (a * s2i, b * s2i, c * s2i);
    let (dn, en) = (d / s, e / s);
    let do_ = dn - 2.0 * ao * mx - bo * my;
    let eo = en - 2.0 * co * my - bo * mx;
    let fo = f + ao * mx * mx + bo * mx * my + co * my * my - dn * mx - en * my;
    Some([ao, bo, co, do_, eo, fo])
}

/// Unit vector spanning the null space of a rank-2 3×3 matrix.
fn null_vector(m: &Matrix3<f64>) -> Option<Vector3<f64>> {
    let rows = [m.row(0).transpose(), m.row(1).transpose(), m.row(2).transpose()];
    let v = [rows[0].cross(&rows[1]), rows[0].cross(&rows[2]), rows[1].cross(&rows[2])]
        .into_iter()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))?;
    let n = v.norm();
    (n > 1e-300).then(|| v / n)
}

fn conic_to_ellipse(k: [f64; 6]) -> Option<Ellipse> {
    let [a, b, c, d, e, f] = k;
    let den = b * b - 4.0 * a * c;
    if !(den < 0.0) {
        return None;
    }
    let cx = (2.0 * c * d - b * e) / den;
    let cy = (2.0 * a * e - b * d) / den;
    let f0 = a * cx * cx + b * cx * cy + c * cy * cy + d * cx + e * cy + f;
    let q = nalgebra::Matrix2::new(a, b / 2.0, b / 2.0, c);
    let eig = q.symmetric_eigen();
    let (l0, l1) = (eig.eigenvalues[0], eig.eigenvalues[1]);
    let r0 = (-f0 / l0).sqrt();
    let r1 = (-f0 / l1).sqrt();
    let (ra, rb, dir) = if r0 >= r1 { (r0, r1, eig.eigenvectors.column(0)) } else { (r1, r0, eig.eigenvectors.column(1)) };
    let theta = dir[1].atan2(dir[0]);
    let e = Ellipse { cx, cy, a: ra, b: rb, theta }.canonical();
    e.validate().ok().map(|_| e)
}

/// Joint histogram over quantized feature channels (values in `[0, 255]`).
#[derive(Debug, Clone, PartialEq)]
pub struct MeanShiftModel {
    pub bins_per_channel: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub hist: Vec<f64>,
    channels: usize,
}

/// Outcome of [`mean_shift_relocate`].
#[derive(Debug, Clone, PartialEq)]
pub struct MeanShiftResult {
    pub ellipse: Ellipse,
    pub iterations: usize,
    /// Shift length of every iteration.
    pub shifts: Vec<f64>,
    pub converged: bool,
    /// The window held no usable pixels; `ellipse` is the start.
    pub empty_window: bool,
}

fn bin_of(px: &[f64], bins: usize) -> usize {
    px.iter().fold(0, |acc, &v| {
        let b = ((v / 256.0 * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        acc * bins + b
    })
}

/// Pixels inside `e` with their normalized squared radius.
fn window(e: &Ellipse, width: usize, height: usize) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
    let (hx, hy) = e.half_extents();
    let x0 = (e.cx - hx).floor().max(0.0) as usize;
    let y0 = (e.cy - hy).floor().max(0.0) as usize;
    let x1 = ((e.cx + hx).ceil().max(0.0) as usize).min(width.saturating_sub(1));
    let y1 = ((e.cy + hy).ceil().max(0.0) as usize).min(height.saturating_sub(1));
    (y0..=y1).flat_map(move |y| (x0..=x1).map(move |x| (x, y))).filter_map(move |(x, y)| {
        let r2 = e.quadratic(x as f64, y as f64) + 1.0;
        (r2 <= 1.0 && x < width && y < height).then_some((x, y, r2))
    })
}

/// Epanechnikov-weighted histogram inside `e`; `None` if the window is empty.
fn weighted_hist(fi: &FeatureImage, e: &Ellipse, bins: usize) -> Option<Vec<f64>> {
    let mut h = vec![0.0; bins.pow(fi.channels() as u32)];
    let mut total = 0.0;
    for (x, y, r2) in window(e, fi.width(), fi.height()) {
        let w = 1.0 - r2;
        h[bin_of(fi.pixel(x, y), bins)] += w;
        total += w;
    }
    if total <= 0.0 {
        return None;
    }
    h.iter_mut().for_each(|v| *v /= total);
    Some(h)
}

impl MeanShiftModel {
    /// Target model from the pixels of `fi` inside `e`.
    pub fn from_region(fi: &FeatureImage, e: &Ellipse) -> Result<Self> {
        Self::with_bins(fi, e, MEAN_SHIFT_BINS)
    }

    pub fn with_bins(fi: &FeatureImage, e: &Ellipse, bins: usize) -> Result<Self> {
        e.validate()?;
        if fi.channels() == 0 || fi.channels() > MEAN_SHIFT_MAX_CHANNELS {
            return Err(Error::param(
                "channels",
                format!("mean shift supports 1..={MEAN_SHIFT_MAX_CHANNELS} channels, got {}", fi.channels()),
            ));
        }
        if bins < 2 {
            return Err(Error::param("bins", "need at least 2 bins per channel"));
        }
        let hist = weighted_hist(fi, e, bins).ok_or(Error::EmptyRegion)?;
        Ok(MeanShiftModel {
            bins_per_channel: bins,
            max_iters: MEAN_SHIFT_MAX_ITERS,
            tol: MEAN_SHIFT_TOL,
            hist,
            channels: fi.channels(),
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Header line followed by the nonzero histogram entries as `index mass`.
    pub(crate) fn write(&self, out: &mut String) {
        let nnz = self.hist.iter().filter(|&&v| v != 0.0).count();
        out.push_str(&format!(
            "meanshift {} {} {} {} {nnz}\n",
            self.bins_per_channel, self.channels, self.max_iters, self.tol
        ));
        for (i, v) in self.hist.iter().enumerate().filter(|(_, &v)| v != 0.0) {
            out.push_str(&format!("{i} {v}\n"));
        }
    }

    pub(crate) fn read(lines: &mut Lines<'_>) -> Result<Self> {
        let toks = lines.expect("meanshift")?;
        let bins: usize = lines.parse_tok(toks.first(), "bins per channel")?;
        let channels: usize = lines.parse_tok(toks.get(1), "channels")?;
        let max_iters: usize = lines.parse_tok(toks.get(2), "max iterations")?;
        let tol: f64 = lines.parse_tok(toks.get(3), "tolerance")?;
        let nnz: usize = lines.parse_tok(toks.get(4), "entry count")?;
        if bins < 2 || channels == 0 || channels > MEAN_SHIFT_MAX_CHANNELS {
            return Err(lines.err("mean-shift histogram shape out of range"));
        }
        let mut hist = vec![0.0; bins.pow(channels as u32)];
        for _ in 0..nnz {
            let entry = lines.next_line()?;
            let mut it = entry.split_whitespace();
            let (i, v) = (it.next(), it.next());
            let i: usize = lines.parse_tok(i.as_ref(), "bin index")?;
            let v: f64 = lines.parse_tok(v.as_ref(), "bin mass")?;
            *hist.get_mut(i).ok_or_else(|| lines.err(format!("bin {i} out of range")))? = v;
        }
        Ok(MeanShiftModel { bins_per_channel: bins, max_iters, tol, hist, channels })
    }
}

/// Moves the center of `start` by mean-shift iterations toward the region
/// whose histogram best matches `model`. Shape and orientation are unchanged.
pub fn mean_shift_relocate(fi: &FeatureImage, model: &MeanShiftModel, start: &Ellipse) -> Result<MeanShiftResult> {
    start.validate()?;
    if fi.channels() != model.channels {
        return Err(Error::DimensionMismatch(format!(
            "model has {} channels, image has {}",
            model.channels,
            fi.channels()
        )));
    }
    let bins = model.bins_per_channel;
    let mut e = *start;
    let mut shifts = Vec::new();
    let mut converged = false;
    for _ in 0..model.max_iters {
        let Some(p) = weighted_hist(fi, &e, bins) else {
            return Ok(MeanShiftResult { ellipse: *start, iterations: shifts.len(), shifts, converged: false, empty_window: true });
        };
        // With the Epanechnikov profile the shift is the weight-averaged position.
        let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
        for (x, y, _) in window(&e, fi.width(), fi.height()) {
            let b = bin_of(fi.pixel(x, y), bins);
            if p[b] > 0.0 {
                let w = (model.hist[b] / p[b]).sqrt();
                sx += w * x as f64;
                sy += w * y as f64;
                sw += w;
            }
        }
        if sw <= 0.0 {
            // No overlap with the target histogram at all.
            return Ok(MeanShiftResult { ellipse: *start, iterations: shifts.len(), shifts, converged: false, empty_window: true });
        }
        let (nx, ny) = (sx / sw, sy / sw);
        let shift = (nx - e.cx).hypot(ny - e.cy);
        e.cx = nx;
        e.cy = ny;
        shifts.push(shift);
        if shift < model.tol {
            converged = true;
            break;
        }
    }
    Ok(MeanShiftResult { ellipse: e, iterations: shifts.len(), shifts, converged, empty_window: false })
}
