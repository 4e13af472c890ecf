//! Feature-space clustering, kernel-weighted signatures and the saturating
//! ground distance between cluster centers.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::region::RegionMask;
use crate::sift::FeatureImage;
use crate::textfmt::{write_row, Lines};

pub const DEFAULT_BINS: usize = 8;

/// Cluster centers `h_u` plus per-component standard deviations of the
/// features they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    centers: Vec<Vec<f64>>,
    zeta: Vec<f64>,
}

impl ClusterSet {
    pub fn new(centers: Vec<Vec<f64>>, zeta: Vec<f64>) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::param("centers", "need at least one center"));
        }
        let k = zeta.len();
        if centers.iter().any(|c| c.len() != k) {
            return Err(Error::DimensionMismatch("center length differs from zeta length".into()));
        }
        if centers.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::param("centers", "non-finite coordinate"));
        }
        if zeta.iter().any(|&z| !(z >= 0.0)) {
            return Err(Error::param("zeta", "must be nonnegative"));
        }
        Ok(ClusterSet { centers, zeta })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.zeta.len()
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn center(&self, u: usize) -> &[f64] {
        &self.centers[u]
    }

    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    /// `‖ζ‖`, the default ground-distance scale.
    pub fn beta(&self) -> f64 {
        self.zeta.iter().map(|z| z * z).sum::<f64>().sqrt()
    }

    pub(crate) fn write(&self, out: &mut String) {
        out.push_str(&format!("clusters {} {}\n", self.len(), self.dim()));
        out.push_str("zeta ");
        write_row(out, self.zeta.iter().copied());
        for c in &self.centers {
            write_row(out, c.iter().copied());
        }
    }

    pub(crate) fn read(lines: &mut Lines<'_>) -> Result<Self> {
        let toks = lines.expect("clusters")?;
        let u: usize = lines.parse_tok(toks.first(), "cluster count")?;
        let k: usize = lines.parse_tok(toks.get(1), "feature dimension")?;
        let z = lines.expect("zeta")?;
        if z.len() != k {
            return Err(lines.err(format!("expected {k} zeta values, found {}", z.len())));
        }
        let zeta = z
            .iter()
            .map(|t| lines.parse_tok::<f64>(Some(t), "zeta"))
            .collect::<Result<Vec<_>>>()?;
        let centers = (0..u).map(|_| lines.floats(k)).collect::<Result<Vec<_>>>()?;
        ClusterSet::new(centers, zeta).map_err(|e| lines.err(e.to_string()))
    }
}

fn mean_of(points: &[&[f64]], k: usize) -> Vec<f64> {
    let mut m = vec![0.0; k];
    for p in points {
        for (a, b) in m.iter_mut().zip(p.iter()) {
            *a += b;
        }
    }
    let n = points.len() as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

fn sse_of(points: &[&[f64]], k: usize) -> f64 {
    let m = mean_of(points, k);
    points
        .iter()
        .map(|p| p.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum()
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

fn has_two_distinct(points: &[&[f64]]) -> bool {
    points.windows(2).any(|w| w[0] != w[1])
}

/// Splits `leaf` (sorted lexicographically) along its widest-variance axis at
/// the value change nearest the median.
fn split_leaf<'a>(leaf: &[&'a [f64]], k: usize) -> (Vec<&'a [f64]>, Vec<&'a [f64]>) {
    let m = mean_of(leaf, k);
    let mut axis = 0;
    let mut best = -1.0;
    for (d, md) in m.iter().enumerate() {
        let var: f64 = leaf.iter().map(|p| (p[d] - md) * (p[d] - md)).sum();
        if var > best {
            best = var;
            axis = d;
        }
    }
    let mut sorted = leaf.to_vec();
    sorted.sort_by(|a, b| a[axis].total_cmp(&b[axis]).then_with(|| lex_cmp(a, b)));
    let n = sorted.len();
    let half = n / 2;
    let cut = (1..n)
        .filter(|&i| sorted[i - 1][axis] != sorted[i][axis])
        .min_by_key(|&i| (i.abs_diff(half), i))
        .expect("widest axis of a non-constant leaf has a value change");
    let right = sorted.split_off(cut);
    (sorted, right)
}

/// K-D tree partition of `features` into `bins` leaves; centers are leaf means.
///
/// The leaf with the largest within-leaf squared error is split next, so the
/// result does not depend on input order. If fewer than `bins` distinct vectors
/// exist the count is reduced with a warning.
pub fn cluster_features<P: AsRef<[f64]>>(features: &[P], bins: usize) -> Result<ClusterSet> {
    if bins == 0 {
        return Err(Error::param("bins", "must be at least 1"));
    }
    let first = features.first().ok_or(Error::EmptyRegion)?;
    let k = first.as_ref().len();
    if k == 0 {
        return Err(Error::param("features", "zero-dimensional features"));
    }
    let mut pts: Vec<&[f64]> = Vec::with_capacity(features.len());
    for f in features {
        let f = f.as_ref();
        if f.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "feature of length {} among length-{k} features",
                f.len()
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("features", "non-finite value"));
        }
        pts.push(f);
    }
    pts.sort_by(|a, b| lex_cmp(a, b));

    let n = pts.len() as f64;
    let mean = mean_of(&pts, k);
    let zeta = (0..k)
        .map(|d| {
            if pts.len() < 2 {
                return 0.0;
            }
            let ss: f64 = pts.iter().map(|p| (p[d] - mean[d]).powi(2)).sum();
            (ss / (n - 1.0)).sqrt()
        })
        .collect();

    let mut leaves: Vec<Vec<&[f64]>> = vec![pts];
    while leaves.len() < bins {
        let pick = leaves
            .iter()
            .enumerate()
            .filter(|(_, l)| has_two_distinct(l))
            .map(|(i, l)| (i, sse_of(l, k)))
            .fold(None::<(usize, f64)>, |best, (i, s)| match best {
                Some((_, bs)) if bs >= s => best,
                _ => Some((i, s)),
            });
        let Some((i, _)) = pick else {
            log::warn!(
                "only {} distinct feature vectors; using {} bins instead of {bins}",
                leaves.len(),
                leaves.len()
            );
            break;
        };
        let (mut left, mut right) = split_leaf(&leaves[i], k);
        left.sort_by(|a, b| lex_cmp(a, b));
        right.sort_by(|a, b| lex_cmp(a, b));
        leaves[i] = left;
        leaves.push(right);
    }
    let centers = leaves.iter().map(|l| mean_of(l, k)).collect();
    ClusterSet::new(centers, zeta)
}

/// Index of the nearest center; ties go to the lowest index.
pub fn assign_bin(feature: &[f64], clusters: &ClusterSet) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (u, c) in clusters.centers.iter().enumerate() {
        let d: f64 = c.iter().zip(feature).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = u;
        }
    }
    best
}

/// Nearest-center bin for every pixel of `fi`, row-major.
pub fn bin_map(fi: &FeatureImage, clusters: &ClusterSet) -> Result<Vec<usize>> {
    if fi.channels() != clusters.dim() {
        return Err(Error::DimensionMismatch(format!(
            "feature image has {} channels, clusters have dimension {}",
            fi.channels(),
            clusters.dim()
        )));
    }
    Ok((0..fi.width() * fi.height())
        .into_par_iter()
        .map(|i| assign_bin(fi.pixel_at(i), clusters))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelKind {
    #[default]
    Normal,
    Epanechnikov,
    Uniform,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Normal => "normal",
            KernelKind::Epanechnikov => "epanechnikov",
            KernelKind::Uniform => "uniform",
        })
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(KernelKind::Normal),
            "epanechnikov" => Ok(KernelKind::Epanechnikov),
            "uniform" => Ok(KernelKind::Uniform),
            other => Err(Error::param("kernel", format!("unknown kernel `{other}`"))),
        }
    }
}

/// A spatial kernel with its bandwidth: `σ` for the normal kernel, the support
/// radius `h` for Epanechnikov, ignored for uniform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub kind: KernelKind,
    pub bandwidth: f64,
}

impl Kernel {
    pub fn new(kind: KernelKind, bandwidth: f64) -> Result<Self> {
        if kind != KernelKind::Uniform && !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::param("bandwidth", format!("must be positive, got {bandwidth}")));
        }
        Ok(Kernel { kind, bandwidth })
    }

    pub fn uniform() -> Self {
        Kernel { kind: KernelKind::Uniform, bandwidth: 1.0 }
    }

    /// Weight at squared distance `d2` from the center.
    #[inline]
    pub fn weight_sq(&self, d2: f64) -> f64 {
        let h2 = self.bandwidth * self.bandwidth;
        match self.kind {
            KernelKind::Normal => (-d2 / (2.0 * h2)).exp(),
            KernelKind::Epanechnikov => (1.0 - d2 / h2).max(0.0),
            KernelKind::Uniform => 1.0,
        }
    }

    #[inline]
    pub fn weight(&self, z: (f64, f64), center: (f64, f64)) -> f64 {
        let (dx, dy) = (z.0 - center.0, z.1 - center.1);
        self.weight_sq(dx * dx + dy * dy)
    }
}

pub fn kernel_weight(z: (f64, f64), center: (f64, f64), sigma: f64, kind: KernelKind) -> Result<f64> {
    Ok(Kernel::new(kind, sigma)?.weight(z, center))
}

/// Normalized bin masses of a region.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    pub masses: Vec<f64>,
}

impl Signature {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() || masses.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::param("masses", "must be a nonempty nonnegative vector"));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param("masses", format!("sum to {total}, expected 1")));
        }
        Ok(Signature { masses })
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }
}

pub const SIGNATURE_FILE_VERSION: &str = "signature v1";

/// A signature together with its cluster centers, as exchanged in files.
///
/// Text layout: the version line, `size U K`, then one line per cluster with
/// the mass followed by the `K` center coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredSignature {
    pub centers: Vec<Vec<f64>>,
    pub signature: Signature,
}

impl CenteredSignature {
    pub fn new(centers: Vec<Vec<f64>>, signature: Signature) -> Result<Self> {
        if centers.len() != signature.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} centers for {} masses",
                centers.len(),
                signature.len()
            )));
        }
        let k = centers.first().map_or(0, Vec::len);
        if k == 0 || centers.iter().any(|c| c.len() != k) {
            return Err(Error::DimensionMismatch("centers must share a nonzero dimension".into()));
        }
        Ok(CenteredSignature { centers, signature })
    }

    pub fn to_text(&self) -> String {
        let k = self.centers[0].len();
        let mut out = format!("{SIGNATURE_FILE_VERSION}\nsize {} {k}\n", self.centers.len());
        for (c, &m) in self.centers.iter().zip(&self.signature.masses) {
            write_row(&mut out, std::iter::once(m).chain(c.iter().copied()));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        let header = lines.next_line()?;
        if header != SIGNATURE_FILE_VERSION {
            return Err(lines.err(format!("unsupported signature header `{header}`")));
        }
        let toks = lines.expect("size")?;
        let u: usize = lines.parse_tok(toks.first(), "cluster count")?;
        let k: usize = lines.parse_tok(toks.get(1), "feature dimension")?;
        let mut centers = Vec::with_capacity(u);
        let mut masses = Vec::with_capacity(u);
        for _ in 0..u {
            let row = lines.floats(k + 1)?;
            masses.push(row[0]);
            centers.push(row[1..].to_vec());
        }
        let signature = Signature::new(masses).map_err(|e| lines.err(e.to_string()))?;
        Self::new(centers, signature)
    }
}

/// Kernel-weighted histogram of precomputed bins over `mask`, centered on the
/// mask centroid.
pub fn build_signature_from_bins(
    mask: &RegionMask,
    bins: &[usize],
    n_bins: usize,
    kernel: &Kernel,
) -> Result<Signature> {
    if bins.len() != mask.width() * mask.height() {
        return Err(Error::DimensionMismatch("bin map and mask sizes differ".into()));
    }
    let center = mask.centroid().ok_or(Error::EmptyRegion)?;
    let mut masses = vec![0.0; n_bins];
    let mut total = 0.0;
    for (x, y) in mask.pixels() {
        let w = kernel.weight((x as f64, y as f64), center);
        let b = bins[y * mask.width() + x];
        if b >= n_bins {
            return Err(Error::param("bins", format!("bin {b} out of range {n_bins}")));
        }
        masses[b] += w;
        total += w;
    }
    if total <= 0.0 {
        return Err(Error::param("bandwidth", "kernel assigns no weight inside the region"));
    }
    masses.iter_mut().for_each(|m| *m /= total);
    Ok(Signature { masses })
}

pub fn build_signature(
    mask: &RegionMask,
    fi: &FeatureImage,
    clusters: &ClusterSet,
    kernel: &Kernel,
) -> Result<Signature> {
    if (mask.width(), mask.height()) != (fi.width(), fi.height()) {
        return Err(Error::DimensionMismatch(format!(
            "mask {}x{} vs feature image {}x{}",
            mask.width(),
            mask.height(),
            fi.width(),
            fi.height()
        )));
    }
    let bins = bin_map(fi, clusters)?;
    build_signature_from_bins(mask, &bins, clusters.len(), kernel)
}

/// `d_uv = 1 − exp(−β‖a_u − b_v‖)`.
pub fn ground_distance_with_beta(a: &[Vec<f64>], b: &[Vec<f64>], beta: f64) -> Result<DMatrix<f64>> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::param("beta", format!("must be positive, got {beta}")));
    }
    let mut d = DMatrix::zeros(a.len(), b.len());
    for (u, cu) in a.iter().enumerate() {
        for (v, cv) in b.iter().enumerate() {
            if cu.len() != cv.len() {
                return Err(Error::DimensionMismatch("center dimensions differ".into()));
            }
            let dist = cu.iter().zip(cv).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            d[(u, v)] = -(-beta * dist).exp_m1();
        }
    }
    Ok(d)
}

/// Ground distance with `β = ‖ζ‖` taken from the reference clusters. A zero
/// `ζ` falls back to `β = 1`.
pub fn ground_distance(reference: &ClusterSet, candidate: &ClusterSet) -> Result<DMatrix<f64>> {
    let mut beta = reference.beta();
    if beta <= 0.0 {
        log::warn!("reference features have zero spread; ground distance uses beta = 1");
        beta = 1.0;
    }
    ground_distance_with_beta(reference.centers(), candidate.centers(), beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cs(centers: Vec<Vec<f64>>) -> ClusterSet {
        let k = centers[0].len();
        ClusterSet::new(centers, vec![1.0; k]).unwrap()
    }

    #[test]
    fn single_bin_is_global_mean() {
        let pts = vec![vec![1.0, 2.0], vec![3.0, 6.0], vec![5.0, 1.0]];
        let c = cluster_features(&pts, 1).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c.center(0)[0] - 3.0).abs() < 1e-12);
        assert!((c.center(0)[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn separated_clouds_recover_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut pts = Vec::new();
        let mut sums = [[0.0; 3]; 2];
        for i in 0..200 {
            let c = if i % 2 == 0 { 10.0 } else { 200.0 };
            let p: Vec<f64> = (0..3).map(|_| c + rng.random_range(-5.0..5.0)).collect();
            for d in 0..3 {
                sums[i % 2][d] += p[d] / 100.0;
            }
            pts.push(p);
        }
        let c = cluster_features(&pts, 2).unwrap();
        // Oracle: the cloud means, in either order.
        let mut got: Vec<Vec<f64>> = c.centers().to_vec();
        got.sort_by(|a, b| a[0].total_cmp(&b[0]));
        for (g, s) in got.iter().zip(sums.iter()) {
            for d in 0..3 {
                assert!((g[d] - s[d]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zeta_is_sample_std() {
        let pts = vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![6.0, 0.0]];
        let c = cluster_features(&pts, 2).unwrap();
        let mean = 3.0;
        let var = ((1.0f64 - mean).powi(2) + (2.0f64 - mean).powi(2) + (6.0f64 - mean).powi(2)) / 2.0;
        assert!((c.zeta()[0] - var.sqrt()).abs() < 1e-12);
        assert_eq!(c.zeta()[1], 0.0);
    }

    #[test]
    fn too_few_distinct_points_reduces_bins() {
        let pts = vec![vec![1.0], vec![1.0], vec![2.0], vec![2.0]];
        let c = cluster_features(&pts, 8).unwrap();
        assert_eq!(c.len(), 2);
        let empty: Vec<Vec<f64>> = vec![];
        assert!(cluster_features(&empty, 2).is_err());
    }

    #[test]
    fn clustering_is_order_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts: Vec<Vec<f64>> =
            (0..300).map(|_| (0..3).map(|_| rng.random_range(0.0..255.0)).collect()).collect();
        let a = cluster_features(&pts, 8).unwrap();
        pts.reverse();
        pts.swap(3, 100);
        let b = cluster_features(&pts, 8).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
    }

    #[test]
    fn assign_bin_cases() {
        let c = cs(vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![5.0, 5.0]]);
        assert_eq!(assign_bin(&[5.0, 5.0], &c), 2);
        assert_eq!(assign_bin(&[1.0, 0.0], &c), 0);
    }

    #[test]
    fn assign_bin_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let centers: Vec<Vec<f64>> =
            (0..8).map(|_| (0..3).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
        let c = cs(centers.clone());
        for _ in 0..10_000 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..12.0)).collect();
            let dists: Vec<f64> = centers
                .iter()
                .map(|c| c.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum())
                .collect();
            let min = dists.iter().cloned().fold(f64::INFINITY, f64::min);
            let expect = dists.iter().position(|&d| d == min).unwrap();
            assert_eq!(assign_bin(&q, &c), expect);
        }
    }

    #[test]
    fn kernel_closed_forms() {
        let s = 3.0;
        assert_eq!(kernel_weight((4.0, 5.0), (4.0, 5.0), s, KernelKind::Normal).unwrap(), 1.0);
        let d = s * 2f64.sqrt();
        let w = kernel_weight((d, 0.0), (0.0, 0.0), s, KernelKind::Normal).unwrap();
        assert!((w - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(kernel_weight((0.0, s), (0.0, 0.0), s, KernelKind::Epanechnikov).unwrap(), 0.0);
        assert_eq!(kernel_weight((0.0, 0.5 * s), (0.0, 0.0), s, KernelKind::Epanechnikov).unwrap(), 0.75);
        assert_eq!(kernel_weight((9.0, 9.0), (0.0, 0.0), s, KernelKind::Uniform).unwrap(), 1.0);
        assert!(kernel_weight((0.0, 0.0), (0.0, 0.0), 0.0, KernelKind::Normal).is_err());
        assert!(kernel_weight((0.0, 0.0), (0.0, 0.0), -1.0, KernelKind::Epanechnikov).is_err());
    }

    #[test]
    fn single_bin_region_gets_all_mass() {
        let mask = RegionMask::rect(8, 8, 1, 1, 5, 4);
        let bins = vec![3; 64];
        let sig = build_signature_from_bins(&mask, &bins, 5, &Kernel::uniform()).unwrap();
        assert_eq!(sig.masses, vec![0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(build_signature_from_bins(&RegionMask::empty(8, 8), &bins, 5, &Kernel::uniform()).is_err());
    }

    #[test]
    fn checkerboard_signature() {
        let (w, h) = (12, 12);
        let bins: Vec<usize> = (0..w * h).map(|i| ((i % w) + (i / w)) % 2).collect();
        let mask = RegionMask::rect(w, h, 2, 2, 8, 8);
        let sig = build_signature_from_bins(&mask, &bins, 2, &Kernel::uniform()).unwrap();
        assert_eq!(sig.masses, vec![0.5, 0.5]);

        // Direct weighted-count oracle for the normal kernel.
        let k = Kernel::new(KernelKind::Normal, 2.5).unwrap();
        let (cx, cy) = (5.5, 5.5);
        let mut acc = [0.0; 2];
        for y in 2..10 {
            for x in 2..10 {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                acc[(x + y) % 2] += (-d2 / (2.0 * 2.5 * 2.5)).exp();
            }
        }
        let tot = acc[0] + acc[1];
        let sig = build_signature_from_bins(&mask, &bins, 2, &k).unwrap();
        assert!((sig.masses[0] - acc[0] / tot).abs() < 1e-12);
        assert!((sig.masses[1] - acc[1] / tot).abs() < 1e-12);
    }

    #[test]
    fn feature_image_signature() {
        let data: Vec<f64> = (0..16).flat_map(|i| [if i % 4 < 2 { 0.0 } else { 10.0 }, 1.0]).collect();
        let fi = FeatureImage::new(4, 4, 2, data).unwrap();
        let c = cs(vec![vec![0.0, 1.0], vec![10.0, 1.0]]);
        let mask = RegionMask::rect(4, 4, 0, 0, 3, 4);
        let sig = build_signature(&mask, &fi, &c, &Kernel::uniform()).unwrap();
        assert!((sig.masses[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!(build_signature(&RegionMask::empty(5, 4), &fi, &c, &Kernel::uniform()).is_err());
    }

    #[test]
    fn ground_distance_closed_forms() {
        let z = ClusterSet::new(vec![vec![0.0, 0.0], vec![0.6, 0.8]], vec![2.0, 0.0]).unwrap();
        let d = ground_distance(&z, &z).unwrap();
        assert_eq!(d[(0, 0)], 0.0);
        assert_eq!(d[(1, 1)], 0.0);
        // ‖Δ‖ = 1, β = 2.
        assert!((d[(0, 1)] - (1.0 - (-2f64).exp())).abs() < 1e-15);
        assert_eq!(d[(0, 1)], d[(1, 0)]);

        let a = vec![vec![0.0]];
        let b = vec![vec![0.5]];
        let d = ground_distance_with_beta(&a, &b, 2.0).unwrap();
        assert!((d[(0, 0)] - (1.0 - (-1f64).exp())).abs() < 1e-15);
        assert!((d[(0, 0)] - 0.6321205588).abs() < 1e-9);
    }

    #[test]
    fn ground_distance_zero_spread_falls_back() {
        let z = ClusterSet::new(vec![vec![0.0], vec![1.0]], vec![0.0]).unwrap();
        let d = ground_distance(&z, &z).unwrap();
        assert!((d[(0, 1)] - (1.0 - (-1f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn ground_distance_increases_along_ray() {
        let a = vec![vec![1.0, 2.0, 3.0]];
        let b: Vec<Vec<f64>> =
            (0..50).map(|i| vec![1.0 + 0.1 * i as f64, 2.0 + 0.2 * i as f64, 3.0]).collect();
        let d = ground_distance_with_beta(&a, &b, 0.7).unwrap();
        for v in 1..50 {
            assert!(d[(0, v)] > d[(0, v - 1)]);
            assert!(d[(0, v)] < 1.0);
        }
    }

    #[test]
    fn cluster_text_round_trip() {
        let c = ClusterSet::new(vec![vec![0.1, 2.0], vec![1.0 / 3.0, -4.5]], vec![0.25, 1e-7]).unwrap();
        let mut s = String::new();
        c.write(&mut s);
        let back = ClusterSet::read(&mut Lines::new(&s)).unwrap();
        assert_eq!(c, back);
    }

    proptest! {
        #[test]
        fn masses_are_probability_vector(
            seed in 0u64..1000,
            kind in prop_oneof![Just(KernelKind::Normal), Just(KernelKind::Epanechnikov), Just(KernelKind::Uniform)],
            bw in 1.0f64..20.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (w, h) = (16, 14);
            let bins: Vec<usize> = (0..w * h).map(|_| rng.random_range(0..6)).collect();
            let (x0, y0) = (rng.random_range(0..8), rng.random_range(0..7));
            let mask = RegionMask::rect(w, h, x0, y0, rng.random_range(1..8), rng.random_range(1..7));
            let k = Kernel::new(kind, bw).unwrap();
            let sig = build_signature_from_bins(&mask, &bins, 6, &k).unwrap();
            let s: f64 = sig.masses.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(sig.masses.iter().all(|&m| m >= 0.0));
            if kind == KernelKind::Uniform {
                let mut hist = vec![0.0; 6];
                for i in mask.indices() { hist[bins[i]] += 1.0; }
                let a = mask.area() as f64;
                for (m, c) in sig.masses.iter().zip(&hist) {
                    prop_assert!((m - c / a).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn ground_distance_symmetric_and_bounded(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scale = if seed % 2 == 0 { 1.0 } else { 255.0 };
            let pts: Vec<Vec<f64>> = (0..60).map(|_| (0..3).map(|_| rng.random_range(0.0..scale)).collect()).collect();
            let c = cluster_features(&pts, 6).unwrap();
            let d = ground_distance(&c, &c).unwrap();
            for u in 0..c.len() {
                for v in 0..c.len() {
                    prop_assert_eq!(d[(u, v)], d[(v, u)]);
                    prop_assert!(d[(u, v)] >= 0.0 && d[(u, v)] <= 1.0);
                    // On wide feature ranges the exponential underflows to exactly 1.
                    if scale == 1.0 {
                        prop_assert!(d[(u, v)] < 1.0);
                    }
                    prop_assert_eq!(d[(u, v)] == 0.0, u == v);
                }
            }
        }
    }
}
