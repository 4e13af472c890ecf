//! Boundary force of the EMD region functional.
//!
//! With the duals `l` frozen, the functional is `Σ_v l_v q_v(Ω)` where `q` is
//! the kernel-weighted candidate histogram centered on the region centroid.
//! `force_at` returns `F(z)` such that adding a small patch of area `ε` at `z`
//! changes the functional by `−ε F(z)`; positive force favours growth.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mec::minimal_enclosing_circle;
use crate::region::RegionMask;
use crate::signature::{Kernel, KernelKind};

/// Smallest kernel bandwidth, in pixels.
pub const SIGMA_MIN: f64 = 1.0;

/// Region integrals needed by [`force_at`], computed once per evolution step.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionStats {
    /// Area `G0` in pixels.
    pub area: f64,
    pub centroid: (f64, f64),
    /// Kernel mass `K2 = Σ_Ω w(z − z_c)`.
    pub kernel_mass: f64,
    /// Candidate masses `q`.
    pub q: Vec<f64>,
    /// `Σ_v l_v q_v`.
    pub lq: f64,
    pub kernel: Kernel,
    /// First moment `M` of the dual excess about the centroid.
    pub moment: (f64, f64),
}

impl RegionStats {
    /// Coefficient multiplying `⟨M, z − z_c⟩`.
    fn moment_coef(&self) -> f64 {
        let h2 = self.kernel.bandwidth * self.kernel.bandwidth;
        match self.kernel.kind {
            KernelKind::Normal => 1.0 / (h2 * self.area * self.kernel_mass),
            KernelKind::Epanechnikov => 2.0 / (h2 * self.area * self.kernel_mass),
            KernelKind::Uniform => 0.0,
        }
    }
}

pub fn compute_stats(mask: &RegionMask, bins: &[usize], l: &[f64], kernel: &Kernel) -> Result<RegionStats> {
    let w = mask.width();
    if bins.len() != w * mask.height() {
        return Err(Error::DimensionMismatch("bin map and mask sizes differ".into()));
    }
    let (cx, cy) = mask.centroid().ok_or(Error::EmptyRegion)?;
    let n_bins = l.len();
    let idx: Vec<usize> = mask.indices().collect();
    if idx.iter().any(|&i| bins[i] >= n_bins) {
        return Err(Error::DimensionMismatch(format!("bin index outside {n_bins} dual coefficients")));
    }

    let mut q = vec![0.0; n_bins];
    let mut k2 = 0.0;
    for &i in &idx {
        let wt = kernel.weight(((i % w) as f64, (i / w) as f64), (cx, cy));
        q[bins[i]] += wt;
        k2 += wt;
    }
    if k2 <= 0.0 {
        return Err(Error::param("bandwidth", "kernel assigns no weight inside the region"));
    }
    q.iter_mut().for_each(|v| *v /= k2);
    let lq: f64 = l.iter().zip(&q).map(|(a, b)| a * b).sum();

    let moment = if kernel.kind == KernelKind::Uniform {
        (0.0, 0.0)
    } else {
        idx.par_iter()
            .map(|&i| {
                let (dx, dy) = ((i % w) as f64 - cx, (i / w) as f64 - cy);
                let wt = kernel.weight_sq(dx * dx + dy * dy);
                // The Epanechnikov derivative is flat over its support.
                let factor = match kernel.kind {
                    KernelKind::Normal => wt,
                    _ if wt > 0.0 => 1.0,
                    _ => 0.0,
                };
                let g = factor * (l[bins[i]] - lq);
                (dx * g, dy * g)
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1))
    };

    Ok(RegionStats {
        area: idx.len() as f64,
        centroid: (cx, cy),
        kernel_mass: k2,
        q,
        lq,
        kernel: *kernel,
        moment,
    })
}

/// Force at pixel `(x, y)` with pixel bin `bin`.
#[inline]
pub fn force_at(x: usize, y: usize, bin: usize, stats: &RegionStats, l: &[f64]) -> f64 {
    let (dx, dy) = (x as f64 - stats.centroid.0, y as f64 - stats.centroid.1);
    let wt = stats.kernel.weight_sq(dx * dx + dy * dy);
    let local = -wt * (l[bin] - stats.lq) / stats.kernel_mass;
    let global = -stats.moment_coef() * (stats.moment.0 * dx + stats.moment.1 * dy);
    local + global
}

/// Radius of the minimal circle enclosing the region boundary.
pub fn enclosing_radius(mask: &RegionMask) -> Result<f64> {
    let pts: Vec<(f64, f64)> = mask.boundary_pixels().into_iter().map(|(x, y)| (x as f64, y as f64)).collect();
    minimal_enclosing_circle(&pts).map(|c| c.r).ok_or(Error::EmptyRegion)
}

/// Half the enclosing-circle radius, floored at [`SIGMA_MIN`].
pub fn sigma_from_region(mask: &RegionMask) -> Result<f64> {
    Ok((enclosing_radius(mask)? / 2.0).max(SIGMA_MIN))
}

/// Kernel fitted to the region: normal uses `σ` from [`sigma_from_region`],
/// Epanechnikov takes its support one pixel past the enclosing circle so every
/// member pixel has positive weight.
pub fn kernel_for_region(kind: KernelKind, mask: &RegionMask) -> Result<Kernel> {
    match kind {
        KernelKind::Normal => Kernel::new(kind, sigma_from_region(mask)?),
        KernelKind::Epanechnikov => Kernel::new(kind, enclosing_radius(mask)? + 1.0),
        KernelKind::Uniform => Ok(Kernel::uniform()),
    }
}
