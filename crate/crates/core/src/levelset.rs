//! Narrow-band level sets: upwind front propagation with curvature
//! regularization and fast-marching reinitialization to signed distance.
//!
//! `phi` is negative inside the tracked region. Grid index `(i, j)` is
//! column `i` (x) and row `j` (y); samples outside the grid are clamped, so
//! differences across the canvas edge vanish.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::ellipse::Ellipse;
use crate::error::{Error, Result};
use crate::region::RegionMask;

pub const DEFAULT_BAND_HALFWIDTH: f64 = 6.0;
pub const DEFAULT_ALPHA: f64 = 0.0002;
pub const DEFAULT_REINIT_EVERY: usize = 50;

const CFL_SAFETY: f64 = 0.9;
/// Step used when nothing on the band moves.
const DT_IDLE: f64 = 1.0;
const GRAD_FLOOR: f64 = 1e-6;
const CURVATURE_EPS: f64 = 1e-12;
/// Distance past the band edge that fast marching still computes.
const MARCH_MARGIN: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveParams {
    pub alpha: f64,
    pub reinit_every: usize,
    pub band_halfwidth: f64,
}

impl Default for EvolveParams {
    fn default() -> Self {
        EvolveParams {
            alpha: DEFAULT_ALPHA,
            reinit_every: DEFAULT_REINIT_EVERY,
            band_halfwidth: DEFAULT_BAND_HALFWIDTH,
        }
    }
}

impl EvolveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", "must be finite and nonnegative"));
        }
        if self.reinit_every == 0 {
            return Err(Error::param("reinit_every", "must be at least 1"));
        }
        if !(self.band_halfwidth >= 2.0 && self.band_halfwidth.is_finite()) {
            return Err(Error::param("band_halfwidth", "must be at least 2 cells"));
        }
        Ok(())
    }
}

/// Level-set function on a pixel grid with its current narrow band.
#[derive(Debug, Clone)]
pub struct LevelSetGrid {
    width: usize,
    height: usize,
    phi: Vec<f64>,
    band_halfwidth: f64,
    band: Vec<usize>,
    /// `|phi|` of each band cell when the band was built.
    depth: Vec<f64>,
}

/// Upwind gradient norms `(∇⁺, ∇⁻)` for outward and inward motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpwindNorms {
    pub plus: f64,
    pub minus: f64,
}

impl LevelSetGrid {
    /// Wraps an arbitrary `phi` and builds the band `{|phi| ≤ halfwidth}` without reinitializing.
    pub fn from_phi(width: usize, height: usize, phi: Vec<f64>, band_halfwidth: f64) -> Result<Self> {
        if width < 3 || height < 3 {
            return Err(Error::ImageTooSmall { width, height, min: 3 });
        }
        if phi.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} grid needs {} values, got {}",
                width * height,
                phi.len()
            )));
        }
        let mut g = LevelSetGrid { width, height, phi, band_halfwidth, band: Vec::new(), depth: Vec::new() };
        g.rebuild_band();
        Ok(g)
    }

    /// Signed distance to the boundary of `mask` (inside negative).
    pub fn from_mask(mask: &RegionMask, band_halfwidth: f64) -> Result<Self> {
        let phi = mask.as_slice().iter().map(|&m| if m { -0.5 } else { 0.5 }).collect();
        let mut g = Self::from_phi(mask.width(), mask.height(), phi, band_halfwidth)?;
        g.reinitialize()?;
        Ok(g)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn band_halfwidth(&self) -> f64 {
        self.band_halfwidth
    }

    /// Linear indices of band cells, ascending.
    pub fn band(&self) -> &[usize] {
        &self.band
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.phi[j * self.width + i]
    }

    #[inline]
    fn at_clamped(&self, i: isize, j: isize) -> f64 {
        let ic = i.clamp(0, self.width as isize - 1) as usize;
        let jc = j.clamp(0, self.height as isize - 1) as usize;
        self.phi[jc * self.width + ic]
    }

    fn rebuild_band(&mut self) {
        let hw = self.band_halfwidth;
        self.band = (0..self.phi.len()).filter(|&k| self.phi[k].abs() <= hw).collect();
        self.depth = self.band.iter().map(|&k| self.phi[k].abs()).collect();
    }

    /// Central-difference gradient `(D⁰ˣ, D⁰ʸ)`.
    pub fn grad_central(&self, i: usize, j: usize) -> (f64, f64) {
        let (i, j) = (i as isize, j as isize);
        let gx = (self.at_clamped(i + 1, j) - self.at_clamped(i - 1, j)) / 2.0;
        let gy = (self.at_clamped(i, j + 1) - self.at_clamped(i, j - 1)) / 2.0;
        (gx, gy)
    }

    /// One-sided differences `(D⁻ˣ, D⁺ˣ, D⁻ʸ, D⁺ʸ)`.
    fn one_sided(&self, i: usize, j: usize) -> (f64, f64, f64, f64) {
        let (ii, jj) = (i as isize, j as isize);
        let c = self.at(i, j);
        (
            c - self.at_clamped(ii - 1, jj),
            self.at_clamped(ii + 1, jj) - c,
            c - self.at_clamped(ii, jj - 1),
            self.at_clamped(ii, jj + 1) - c,
        )
    }

    pub fn upwind_norms(&self, i: usize, j: usize) -> UpwindNorms {
        let (mx, px, my, py) = self.one_sided(i, j);
        let plus = (mx.max(0.0).powi(2) + px.min(0.0).powi(2) + my.max(0.0).powi(2) + py.min(0.0).powi(2)).sqrt();
        let minus = (px.max(0.0).powi(2) + mx.min(0.0).powi(2) + py.max(0.0).powi(2) + my.min(0.0).powi(2)).sqrt();
        UpwindNorms { plus, minus }
    }

    /// `κ|∇φ|` with second-order central differences (the curvature term of
    /// the update before the time step).
    fn curvature_times_grad(&self, i: usize, j: usize) -> f64 {
        let (num, den) = self.curvature_parts(i, j);
        num / (den + CURVATURE_EPS)
    }

    fn curvature_parts(&self, i: usize, j: usize) -> (f64, f64) {
        let (ii, jj) = (i as isize, j as isize);
        let c = self.at(i, j);
        let xp = self.at_clamped(ii + 1, jj);
        let xm = self.at_clamped(ii - 1, jj);
        let yp = self.at_clamped(ii, jj + 1);
        let ym = self.at_clamped(ii, jj - 1);
        let dx = (xp - xm) / 2.0;
        let dy = (yp - ym) / 2.0;
        let dxx = xp - 2.0 * c + xm;
        let dyy = yp - 2.0 * c + ym;
        let dxy = (self.at_clamped(ii + 1, jj + 1) - self.at_clamped(ii + 1, jj - 1) - self.at_clamped(ii - 1, jj + 1)
            + self.at_clamped(ii - 1, jj - 1))
            / 4.0;
        let num = dxx * dy * dy - 2.0 * dx * dy * dxy + dyy * dx * dx;
        (num, dx * dx + dy * dy)
    }

    /// Mean curvature `div(∇φ/|∇φ|)`; positive on convex parts of the region.
    pub fn curvature_at(&self, i: usize, j: usize) -> f64 {
        let (num, den) = self.curvature_parts(i, j);
        num / (den.powf(1.5) + CURVATURE_EPS)
    }

    /// Stable time step for a force field given on the band (same order as
    /// [`band`](Self::band)).
    pub fn cfl_dt(&self, force: &[f64], alpha: f64) -> f64 {
        let worst = self
            .band
            .iter()
            .zip(force)
            .map(|(&k, &f)| {
                let (i, j) = (k % self.width, k / self.width);
                let (_, px, _, py) = self.one_sided(i, j);
                let (gx, gy) = self.grad_central(i, j);
                let g = (gx * gx + gy * gy).sqrt().max(GRAD_FLOOR);
                f.abs() * (px.abs() + py.abs()) / g + 4.0 * alpha
            })
            .fold(0.0, f64::max);
        if worst > 0.0 {
            CFL_SAFETY / worst
        } else {
            DT_IDLE
        }
    }

    /// One explicit step on band cells. Positive force moves the front outward.
    pub fn evolve_step(&mut self, force: &[f64], alpha: f64, dt: f64) -> Result<()> {
        if force.len() != self.band.len() {
            return Err(Error::DimensionMismatch(format!(
                "force has {} entries, band has {}",
                force.len(),
                self.band.len()
            )));
        }
        let w = self.width;
        let updates: Vec<f64> = self
            .band
            .par_iter()
            .zip(force.par_iter())
            .map(|(&k, &f)| {
                let (i, j) = (k % w, k / w);
                let n = self.upwind_norms(i, j);
                let advect = f.max(0.0) * n.plus + f.min(0.0) * n.minus;
                let smooth = if alpha > 0.0 { alpha * self.curvature_times_grad(i, j) } else { 0.0 };
                self.phi[k] - dt * advect + dt * smooth
            })
            .collect();
        for (&k, v) in self.band.iter().zip(updates) {
            self.phi[k] = v;
        }
        Ok(())
    }

    /// True once the front has drifted close to the edge of the band built at
    /// the last reinitialization.
    pub fn front_near_band_edge(&self) -> bool {
        let edge = self.band_halfwidth - 2.0;
        self.band.iter().zip(&self.depth).any(|(&k, &d)| d >= edge && self.phi[k].abs() < 1.0)
    }

    /// Whether the front crosses any grid edge.
    pub fn has_interface(&self) -> bool {
        let w = self.width;
        (0..self.phi.len()).any(|k| {
            let inside = self.phi[k] < 0.0;
            (k % w + 1 < w && (self.phi[k + 1] < 0.0) != inside)
                || (k + w < self.phi.len() && (self.phi[k + w] < 0.0) != inside)
        })
    }

    /// Sub-cell zero crossings along grid edges, by linear interpolation.
    pub fn zero_crossings(&self) -> Vec<(f64, f64)> {
        let (w, h) = (self.width, self.height);
        let mut out = Vec::new();
        for j in 0..h {
            for i in 0..w {
                let a = self.at(i, j);
                if i + 1 < w {
                    let b = self.at(i + 1, j);
                    if (a < 0.0) != (b < 0.0) {
                        out.push((i as f64 + a / (a - b), j as f64));
                    }
                }
                if j + 1 < h {
                    let b = self.at(i, j + 1);
                    if (a < 0.0) != (b < 0.0) {
                        out.push((i as f64, j as f64 + a / (a - b)));
                    }
                }
            }
        }
        out
    }

    /// Replaces `phi` by the signed distance to its zero set out to a little
    /// past the band; farther cells keep their sign at that clamp distance.
    /// The band is rebuilt.
    ///
    /// The zero set is the marching-squares polyline through the linearly
    /// interpolated edge crossings. A heap-ordered front then marches outward
    /// from the cells next to it, each cell inheriting the nearest segment of
    /// its closest accepted neighbour.
    pub fn reinitialize(&mut self) -> Result<()> {
        let (w, h) = (self.width, self.height);
        let n = w * h;
        let limit = self.band_halfwidth + MARCH_MARGIN;
        let segments = self.zero_segments();
        if segments.is_empty() {
            return Err(Error::LostContour);
        }

        let mut dist = vec![f64::INFINITY; n];
        let mut nearest = vec![usize::MAX; n];
        let mut accepted = vec![false; n];
        let mut heap = BinaryHeap::new();
        for (s, seg) in segments.iter().enumerate() {
            let (i0, j0) = (seg.cell % w, seg.cell / w);
            for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let k = (j0 + dj) * w + i0 + di;
                let d = seg.distance(((i0 + di) as f64, (j0 + dj) as f64));
                if d < dist[k] {
                    dist[k] = d;
                    nearest[k] = s;
                    heap.push(Trial { d, k });
                }
            }
        }
        while let Some(Trial { d, k }) = heap.pop() {
            if accepted[k] || d > dist[k] {
                continue;
            }
            if d > limit {
                break;
            }
            accepted[k] = true;
            let seg = &segments[nearest[k]];
            let (i, j) = ((k % w) as isize, (k / w) as isize);
            for (di, dj) in NEIGHBORS_8 {
                let (ni, nj) = (i + di, j + dj);
                if ni < 0 || nj < 0 || ni >= w as isize || nj >= h as isize {
                    continue;
                }
                let nk = nj as usize * w + ni as usize;
                if accepted[nk] {
                    continue;
                }
                let nd = seg.distance((ni as f64, nj as f64));
                if nd < dist[nk] {
                    dist[nk] = nd;
                    nearest[nk] = nearest[k];
                    heap.push(Trial { d: nd, k: nk });
                }
            }
        }

        for k in 0..n {
            let d = if accepted[k] { dist[k].min(limit) } else { limit };
            let p = self.phi[k];
            self.phi[k] = if p < 0.0 { -d } else { d };
        }
        self.rebuild_band();
        Ok(())
    }

    /// Marching-squares segments of the zero set. Inside is `phi < 0`;
    /// saddle squares are split by the sign of the square's mean value.
    fn zero_segments(&self) -> Vec<Segment> {
        let (w, h) = (self.width, self.height);
        let mut out = Vec::new();
        for j in 0..h - 1 {
            for i in 0..w - 1 {
                // Corners counter-clockwise from the top-left.
                let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
                let v = corners.map(|(x, y)| self.at(x, y));
                let mut pts = Vec::with_capacity(4);
                for e in 0..4 {
                    let (a, b) = (v[e], v[(e + 1) % 4]);
                    if (a < 0.0) != (b < 0.0) {
                        let t = a / (a - b);
                        let (pa, pb) = (corners[e], corners[(e + 1) % 4]);
                        pts.push((
                            pa.0 as f64 + t * (pb.0 as f64 - pa.0 as f64),
                            pa.1 as f64 + t * (pb.1 as f64 - pa.1 as f64),
                        ));
                    }
                }
                let cell = j * w + i;
                match pts.len() {
                    2 => out.push(Segment { a: pts[0], b: pts[1], cell }),
                    4 => {
                        // Crossings lie on edges 0..4 in order; pair them so the
                        // segments separate the corners that share the centre's sign.
                        let centre_inside = v.iter().sum::<f64>() < 0.0;
                        let first_inside = v[0] < 0.0;
                        if centre_inside == first_inside {
                            out.push(Segment { a: pts[0], b: pts[1], cell });
                            out.push(Segment { a: pts[2], b: pts[3], cell });
                        } else {
                            out.push(Segment { a: pts[3], b: pts[0], cell });
                            out.push(Segment { a: pts[1], b: pts[2], cell });
                        }
                    }
                    _ => {}
                }
            }
        }
        out
    }

    /// Region `{phi < 0}` and its contour: inside cells with an outside 4-neighbour.
    pub fn extract_region(&self) -> Result<(RegionMask, Vec<(usize, usize)>)> {
        let inside: Vec<bool> = self.phi.iter().map(|&p| p < 0.0).collect();
        let mask = RegionMask::new(self.width, self.height, inside)?;
        if mask.is_empty() {
            return Err(Error::EmptyRegion);
        }
        let (w, h) = (self.width, self.height);
        let contour = mask
            .pixels()
            .filter(|&(x, y)| {
                (x > 0 && !mask.contains(x - 1, y))
                    || (x + 1 < w && !mask.contains(x + 1, y))
                    || (y > 0 && !mask.contains(x, y - 1))
                    || (y + 1 < h && !mask.contains(x, y + 1))
            })
            .collect();
        Ok((mask, contour))
    }

    /// Little-endian greyscale PFM (rows bottom to top).
    pub fn to_pfm(&self) -> Vec<u8> {
        let mut out = format!("Pf\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        for j in (0..self.height).rev() {
            for i in 0..self.width {
                out.extend_from_slice(&(self.at(i, j) as f32).to_le_bytes());
            }
        }
        out
    }
}

/// Raw ellipse quadratic sampled on the grid: `-1` at the center, `0` on the curve.
pub fn ellipse_quadratic_phi(e: &Ellipse, width: usize, height: usize) -> Vec<f64> {
    let mut phi = Vec::with_capacity(width * height);
    for j in 0..height {
        for i in 0..width {
            phi.push(e.quadratic(i as f64, j as f64));
        }
    }
    phi
}

/// Level set whose zero set is the ellipse, reinitialized to signed distance.
pub fn init_from_ellipse(e: &Ellipse, width: usize, height: usize, band_halfwidth: f64) -> Result<LevelSetGrid> {
    e.validate()?;
    let mut g = LevelSetGrid::from_phi(width, height, ellipse_quadratic_phi(e, width, height), band_halfwidth)?;
    g.reinitialize()?;
    Ok(g)
}

#[derive(Debug, Clone, Copy)]
struct Trial {
    d: f64,
    k: usize,
}

impl PartialEq for Trial {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Trial {}

impl PartialOrd for Trial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Trial {
    // Reversed: BinaryHeap is a max-heap and the front pops the nearest cell.
    fn cmp(&self, other: &Self) -> Ordering {
        other.d.total_cmp(&self.d).then_with(|| other.k.cmp(&self.k))
    }
}

const NEIGHBORS_8: [(isize, isize); 8] = [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (1, -1), (-1, 1), (1, 1)];

/// Piece of the zero set inside grid square `cell` (its top-left corner index).
#[derive(Debug, Clone, Copy)]
struct Segment {
    a: (f64, f64),
    b: (f64, f64),
    cell: usize,
}

impl Segment {
    fn distance(&self, p: (f64, f64)) -> f64 {
        let (ex, ey) = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let len2 = ex * ex + ey * ey;
        let t = if len2 > 0.0 { (((p.0 - self.a.0) * ex + (p.1 - self.a.1) * ey) / len2).clamp(0.0, 1.0) } else { 0.0 };
        (p.0 - self.a.0 - t * ex).hypot(p.1 - self.a.1 - t * ey)
    }
}
