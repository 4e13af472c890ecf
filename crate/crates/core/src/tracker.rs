//! Reference-model construction and the per-frame contour evolution loop.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::ellipse::Ellipse;
use crate::emd::emd;
use crate::error::{Error, Result};
use crate::force::{compute_stats, force_at, kernel_for_region};
use crate::image::GrayImage;
use crate::initializer::{fit_ellipse, mean_shift_relocate, MeanShiftModel, MEAN_SHIFT_BINS};
use crate::levelset::{init_from_ellipse, LevelSetGrid};
use crate::region::RegionMask;
use crate::sift::{dense_sift, tensor_sift_image, FeatureImage};
use crate::signature::{
    bin_map, build_signature_from_bins, cluster_features, ground_distance, ground_distance_with_beta, ClusterSet,
    KernelKind, Signature,
};
use crate::tensor::{cp_als, CpAlsOptions, CpBasis};
use crate::textfmt::Lines;

/// Smallest reference region accepted; smaller regions leave too few boundary
/// points for a stable ellipse fit.
pub const MIN_REGION_AREA: usize = 36;

/// Features that drive the mean-shift histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MeanShiftFeatures {
    /// The Tensor-SIFT channels.
    #[default]
    Tensor,
    /// Raw gray level.
    Intensity,
}

impl fmt::Display for MeanShiftFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeanShiftFeatures::Tensor => "tensor",
            MeanShiftFeatures::Intensity => "intensity",
        })
    }
}

impl FromStr for MeanShiftFeatures {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tensor" => Ok(MeanShiftFeatures::Tensor),
            "intensity" => Ok(MeanShiftFeatures::Intensity),
            _ => Err(Error::param("mean_shift_features", format!("unknown value `{s}` (tensor|intensity)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// CP rank `K`, the Tensor-SIFT dimension.
    pub rank: usize,
    /// Number of feature clusters `U`.
    pub bins: usize,
    pub kernel: KernelKind,
    /// Curvature weight.
    pub alpha: f64,
    pub max_pde_iters: usize,
    /// Length of the EMD history fitted by the slope rule.
    pub emd_window: usize,
    /// Relative area change between frames that stops the evolution.
    pub area_change_limit: f64,
    pub reinit_every: usize,
    pub enlarge_factor: f64,
    pub band_halfwidth: f64,
    /// Overlap error above which a frame counts as a miss.
    pub failure_threshold: f64,
    /// A sequence fails once more than this many consecutive frames miss.
    pub failure_run: usize,
    pub als_max_sweeps: usize,
    pub als_tol: f64,
    pub seed: u64,
    /// Recompute EMD and duals every this many iterations.
    pub emd_every: usize,
    /// Overrides the ground-distance scale `β = ‖ζ‖`.
    pub beta: Option<f64>,
    pub mean_shift_features: MeanShiftFeatures,
    pub mean_shift_bins: usize,
    /// Run the evolution on the first frame instead of accepting the given mask.
    pub refine_first_frame: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            rank: 3,
            bins: 8,
            kernel: KernelKind::Normal,
            alpha: 0.0002,
            max_pde_iters: 2000,
            emd_window: 20,
            area_change_limit: 0.10,
            reinit_every: 50,
            enlarge_factor: 1.2,
            band_halfwidth: 6.0,
            failure_threshold: 0.8,
            failure_run: 5,
            als_max_sweeps: 100,
            als_tol: 1e-6,
            seed: 0x5EED,
            emd_every: 1,
            beta: None,
            mean_shift_features: MeanShiftFeatures::Tensor,
            mean_shift_bins: MEAN_SHIFT_BINS,
            refine_first_frame: false,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rank", self.rank),
            ("bins", self.bins),
            ("max_pde_iters", self.max_pde_iters),
            ("reinit_every", self.reinit_every),
            ("als_max_sweeps", self.als_max_sweeps),
            ("emd_every", self.emd_every),
            ("failure_run", self.failure_run),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::param(name, "must be positive"));
            }
        }
        if self.emd_window < 2 {
            return Err(Error::param("emd_window", "need at least 2 values to fit a slope"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", format!("must be nonnegative, got {}", self.alpha)));
        }
        for (name, v) in [("area_change_limit", self.area_change_limit), ("failure_threshold", self.failure_threshold)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::param(name, format!("must lie in (0, 1), got {v}")));
            }
        }
        if !(self.enlarge_factor >= 1.0 && self.enlarge_factor.is_finite()) {
            return Err(Error::param("enlarge_factor", format!("must be at least 1, got {}", self.enlarge_factor)));
        }
        if !(self.band_halfwidth >= 3.0 && self.band_halfwidth.is_finite()) {
            return Err(Error::param("band_halfwidth", format!("must be at least 3, got {}", self.band_halfwidth)));
        }
        if !(self.als_tol >= 0.0 && self.als_tol.is_finite()) {
            return Err(Error::param("als_tol", "must be nonnegative"));
        }
        if let Some(b) = self.beta {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::param("beta", format!("must be positive, got {b}")));
            }
        }
        if self.mean_shift_bins < 2 {
            return Err(Error::param("mean_shift_bins", "need at least 2 bins per channel"));
        }
        Ok(())
    }
}

pub const REFERENCE_MODEL_VERSION: &str = "refmodel v1";

/// Everything learned from the annotated first frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    pub cp_basis: CpBasis,
    pub clusters: ClusterSet,
    pub ref_signature: Signature,
    pub ref_mask: RegionMask,
    pub mean_shift_model: MeanShiftModel,
}

impl ReferenceModel {
    pub fn ground_distance(&self, beta: Option<f64>) -> Result<DMatrix<f64>> {
        match beta {
            Some(b) => ground_distance_with_beta(self.clusters.centers(), self.clusters.centers(), b),
            None => ground_distance(&self.clusters, &self.clusters),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{REFERENCE_MODEL_VERSION}\n");
        out.push_str(&self.cp_basis.to_text());
        self.clusters.write(&mut out);
        out.push_str(&format!("signature {}\n", self.ref_signature.len()));
        crate::textfmt::write_row(&mut out, self.ref_signature.masses.iter().copied());
        self.ref_mask.write(&mut out);
        self.mean_shift_model.write(&mut out);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        let header = lines.next_line()?;
        if header != REFERENCE_MODEL_VERSION {
            return Err(lines.err(format!("unsupported reference model header `{header}`")));
        }
        let cp_basis = CpBasis::read(&mut lines)?;
        let clusters = ClusterSet::read(&mut lines)?;
        let toks = lines.expect("signature")?;
        let n: usize = lines.parse_tok(toks.first(), "signature length")?;
        if n != clusters.len() {
            return Err(lines.err(format!("signature has {n} bins, clusters have {}", clusters.len())));
        }
        let ref_signature = Signature::new(lines.floats(n)?).map_err(|e| lines.err(e.to_string()))?;
        let ref_mask = RegionMask::read(&mut lines)?;
        let mean_shift_model = MeanShiftModel::read(&mut lines)?;
        if cp_basis.rank() != clusters.dim() {
            return Err(lines.err("basis rank and cluster dimension differ"));
        }
        Ok(ReferenceModel { cp_basis, clusters, ref_signature, ref_mask, mean_shift_model })
    }
}

fn check_region(mask: &RegionMask, img: &GrayImage) -> Result<()> {
    if (mask.width(), mask.height()) != (img.width(), img.height()) {
        return Err(Error::DimensionMismatch(format!(
            "mask {}x{} vs image {}x{}",
            mask.width(),
            mask.height(),
            img.width(),
            img.height()
        )));
    }
    if mask.area() < MIN_REGION_AREA {
        return Err(Error::RegionTooSmall { area: mask.area(), min: MIN_REGION_AREA });
    }
    Ok(())
}

/// Ellipse fitted to the boundary pixels of `mask`.
pub fn region_ellipse(mask: &RegionMask) -> Result<Ellipse> {
    let pts: Vec<(f64, f64)> = mask.boundary_pixels().into_iter().map(|(x, y)| (x as f64, y as f64)).collect();
    if pts.is_empty() {
        return Err(Error::EmptyRegion);
    }
    fit_ellipse(&pts)
}

fn mean_shift_image(cfg: &TrackerConfig, img: &GrayImage, fi: &FeatureImage) -> Result<FeatureImage> {
    match cfg.mean_shift_features {
        MeanShiftFeatures::Tensor => Ok(fi.clone()),
        MeanShiftFeatures::Intensity => FeatureImage::new(img.width(), img.height(), 1, img.data().to_vec()),
    }
}

pub fn build_reference(ref_image: &GrayImage, ref_mask: &RegionMask, cfg: &TrackerConfig) -> Result<ReferenceModel> {
    cfg.validate()?;
    check_region(ref_mask, ref_image)?;
    let descriptors = dense_sift(ref_image)?;
    let opts = CpAlsOptions { rank: cfg.rank, max_sweeps: cfg.als_max_sweeps, tol: cfg.als_tol, seed: cfg.seed };
    let cp_basis = cp_als(&descriptors, &opts)?.basis();
    let fi = tensor_sift_image(ref_image, &cp_basis)?;
    let features: Vec<&[f64]> = ref_mask.indices().map(|i| fi.pixel_at(i)).collect();
    let clusters = cluster_features(&features, cfg.bins)?;
    let bins = bin_map(&fi, &clusters)?;
    let kernel = kernel_for_region(cfg.kernel, ref_mask)?;
    let ref_signature = build_signature_from_bins(ref_mask, &bins, clusters.len(), &kernel)?;
    let ms_image = mean_shift_image(cfg, ref_image, &fi)?;
    let mean_shift_model = MeanShiftModel::with_bins(&ms_image, &region_ellipse(ref_mask)?, cfg.mean_shift_bins)?;
    Ok(ReferenceModel { cp_basis, clusters, ref_signature, ref_mask: ref_mask.clone(), mean_shift_model })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Slope,
    Area,
}

/// Least-squares slope of `ys` against their index.
pub fn trend_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let xm = (n - 1.0) / 2.0;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &y) in ys.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Stops once the line through the last `emd_window` EMD values is flat or
/// rising, or once the region area moved more than `area_change_limit`
/// relative to `area_prev`.
pub fn stopping_criterion(history: &[f64], area_prev: f64, area_now: f64, cfg: &TrackerConfig) -> StopDecision {
    if area_prev > 0.0 && (area_now - area_prev).abs() / area_prev > cfg.area_change_limit {
        return StopDecision::Area;
    }
    if history.len() >= cfg.emd_window && trend_slope(&history[history.len() - cfg.emd_window..]) >= 0.0 {
        return StopDecision::Slope;
    }
    StopDecision::Continue
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The given first-frame mask, accepted without evolution.
    Initial,
    Slope,
    Area,
    MaxIters,
    Lost,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Initial => "initial",
            StopReason::Slope => "slope",
            StopReason::Area => "area",
            StopReason::MaxIters => "max_iters",
            StopReason::Lost => "lost",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub mask: RegionMask,
    pub contour: Vec<(usize, usize)>,
    /// EMD at the start of every iteration.
    pub emd_trace: Vec<f64>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    /// Ellipse the level set was initialized from.
    pub init_ellipse: Option<Ellipse>,
}

impl FrameResult {
    fn accepted(mask: RegionMask) -> Self {
        let contour = mask.boundary_pixels();
        FrameResult { mask, contour, emd_trace: Vec::new(), iterations: 0, stop_reason: StopReason::Initial, init_ellipse: None }
    }

    pub fn final_emd(&self) -> Option<f64> {
        self.emd_trace.last().copied()
    }
}

/// Hooks into the evolution, for dumping intermediate state.
pub trait TrackObserver {
    fn iteration(&mut self, _frame: usize, _iter: usize, _grid: &LevelSetGrid, _emd: f64) {}
    fn frame_done(&mut self, _frame: usize, _result: &FrameResult) {}
}

impl TrackObserver for () {}

/// Per-sequence tracking state: the reference model and its fixed ground distance.
pub struct Tracker<'a> {
    model: &'a ReferenceModel,
    cfg: TrackerConfig,
    dist: DMatrix<f64>,
}

impl<'a> Tracker<'a> {
    pub fn new(model: &'a ReferenceModel, cfg: &TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        if model.cp_basis.rank() != model.clusters.dim() {
            return Err(Error::DimensionMismatch("basis rank and cluster dimension differ".into()));
        }
        let dist = model.ground_distance(cfg.beta)?;
        Ok(Tracker { model, cfg: cfg.clone(), dist })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Tracks one frame starting from the previous result `prev`.
    pub fn track_frame(
        &self,
        frame_idx: usize,
        frame: &GrayImage,
        prev: &RegionMask,
        observer: &mut dyn TrackObserver,
    ) -> Result<FrameResult> {
        if (prev.width(), prev.height()) != (frame.width(), frame.height()) {
            return Err(Error::DimensionMismatch("frame and previous mask sizes differ".into()));
        }
        let fi = tensor_sift_image(frame, &self.model.cp_basis)?;
        let bins = bin_map(&fi, &self.model.clusters)?;

        let lost = |init: Option<Ellipse>| FrameResult {
            mask: prev.clone(),
            contour: prev.boundary_pixels(),
            emd_trace: Vec::new(),
            iterations: 0,
            stop_reason: StopReason::Lost,
            init_ellipse: init,
        };
        let Ok(fitted) = region_ellipse(prev) else {
            return Ok(lost(None));
        };
        let ms_image = mean_shift_image(&self.cfg, frame, &fi)?;
        let relocated = mean_shift_relocate(&ms_image, &self.model.mean_shift_model, &fitted)?.ellipse;
        let init = relocated.enlarge(self.cfg.enlarge_factor);
        let mut grid = match init_from_ellipse(&init, frame.width(), frame.height(), self.cfg.band_halfwidth) {
            Ok(g) => g,
            Err(Error::LostContour) => return Ok(lost(Some(init))),
            Err(e) => return Err(e),
        };

        let evolution = Evolution { tracker: self, bins: &bins, area_prev: prev.area() as f64, frame_idx };
        match evolution.run(&mut grid, observer)? {
            Some(mut r) => {
                r.init_ellipse = Some(init);
                Ok(r)
            }
            None => Ok(lost(Some(init))),
        }
    }

    /// Tracks `frames` in order. Frame 0 carries `ref_mask` (refined if
    /// configured); the result has one entry per frame.
    pub fn run_sequence(
        &self,
        frames: &[GrayImage],
        truth: Option<&[RegionMask]>,
        observer: &mut dyn TrackObserver,
    ) -> Result<SequenceResult> {
        let first = frames.first().ok_or_else(|| Error::param("frames", "need at least one frame"))?;
        if let Some(t) = truth {
            if t.len() != frames.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} truth masks for {} frames",
                    t.len(),
                    frames.len()
                )));
            }
        }
        let ref_mask = &self.model.ref_mask;
        let first_result = if self.cfg.refine_first_frame {
            self.track_frame(0, first, ref_mask, observer)?
        } else {
            FrameResult::accepted(ref_mask.clone())
        };
        observer.frame_done(0, &first_result);
        let mut results = vec![first_result];
        for (t, frame) in frames.iter().enumerate().skip(1) {
            let prev = &results[t - 1].mask;
            let r = self.track_frame(t, frame, prev, observer)?;
            log::info!("frame {t}: {} iterations, stop {}, emd {:?}", r.iterations, r.stop_reason, r.final_emd());
            observer.frame_done(t, &r);
            results.push(r);
        }
        let overlap = truth
            .map(|t| results.iter().zip(t).map(|(r, g)| overlap_error(&r.mask, g)).collect::<Result<Vec<_>>>())
            .transpose()?;
        let failed = overlap
            .as_deref()
            .is_some_and(|e| sequence_failed(e, self.cfg.failure_threshold, self.cfg.failure_run));
        Ok(SequenceResult { frames: results, overlap, failed })
    }
}

/// Evolution loop of one frame.
struct Evolution<'t, 'a> {
    tracker: &'t Tracker<'a>,
    bins: &'t [usize],
    area_prev: f64,
    frame_idx: usize,
}

impl Evolution<'_, '_> {
    /// `None` when the contour vanished before any iterate was accepted.
    fn run(&self, grid: &mut LevelSetGrid, observer: &mut dyn TrackObserver) -> Result<Option<FrameResult>> {
        let cfg = &self.tracker.cfg;
        let model = self.tracker.model;
        let n_bins = model.clusters.len();
        let width = grid.width();

        let mut trace = Vec::new();
        // Values freshly computed by the solver; the slope rule only looks at these.
        let mut fresh = Vec::new();
        let mut duals: Vec<f64> = Vec::new();
        let mut last: Option<(RegionMask, Vec<(usize, usize)>)> = None;
        // The enlarged start region is far from the previous area, so the area
        // rule only applies once an iterate has come within the limit.
        let mut area_armed = false;

        for iter in 0..cfg.max_pde_iters {
            let Ok((mask, contour)) = grid.extract_region() else {
                return Ok(last.map(|(m, c)| self.finish(m, c, trace, StopReason::Lost)));
            };
            if !grid.has_interface() {
                return Ok(last.map(|(m, c)| self.finish(m, c, trace, StopReason::Lost)));
            }

            let area_now = mask.area() as f64;
            let within = (area_now - self.area_prev).abs() / self.area_prev <= cfg.area_change_limit;
            if area_armed && !within {
                // Return the last iterate before the violation.
                let (m, c) = last.expect("armed after at least one iterate");
                return Ok(Some(self.finish(m, c, trace, StopReason::Area)));
            }
            area_armed |= within;

            let kernel = kernel_for_region(cfg.kernel, &mask)?;
            let cand = build_signature_from_bins(&mask, self.bins, n_bins, &kernel)?;
            let value = if iter % cfg.emd_every == 0 {
                let ev = emd(&model.ref_signature.masses, &cand.masses, &self.tracker.dist)?;
                duals = ev.l;
                fresh.push(ev.value);
                ev.value
            } else {
                *fresh.last().expect("first iteration always solves")
            };
            trace.push(value);
            observer.iteration(self.frame_idx, iter, grid, value);

            let area_ref = if area_armed { self.area_prev } else { 0.0 };
            let decision = stopping_criterion(&fresh, area_ref, area_now, cfg);
            last = Some((mask, contour));
            if decision == StopDecision::Slope {
                let (m, c) = last.expect("just set");
                return Ok(Some(self.finish(m, c, trace, StopReason::Slope)));
            }
            let mask = &last.as_ref().expect("just set").0;

            let stats = compute_stats(mask, self.bins, &duals, &kernel)?;
            let force: Vec<f64> = grid
                .band()
                .iter()
                .map(|&k| force_at(k % width, k / width, self.bins[k], &stats, &duals))
                .collect();
            let dt = grid.cfl_dt(&force, cfg.alpha);
            grid.evolve_step(&force, cfg.alpha, dt)?;
            if (iter + 1) % cfg.reinit_every == 0 || grid.front_near_band_edge() {
                match grid.reinitialize() {
                    Ok(()) => {}
                    Err(Error::LostContour) => {
                        return Ok(last.map(|(m, c)| self.finish(m, c, trace, StopReason::Lost)));
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        // Out of iterations: the region after the last update.
        Ok(match grid.extract_region() {
            Ok((m, c)) if grid.has_interface() => Some(self.finish(m, c, trace, StopReason::MaxIters)),
            _ => last.map(|(m, c)| self.finish(m, c, trace, StopReason::Lost)),
        })
    }

    fn finish(&self, mask: RegionMask, contour: Vec<(usize, usize)>, trace: Vec<f64>, reason: StopReason) -> FrameResult {
        FrameResult { mask, contour, iterations: trace.len(), emd_trace: trace, stop_reason: reason, init_ellipse: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceResult {
    pub frames: Vec<FrameResult>,
    /// Per-frame overlap error when ground truth was supplied.
    pub overlap: Option<Vec<f64>>,
    pub failed: bool,
}

/// Builds the reference from frame 0 and tracks the whole sequence.
pub fn run_sequence(
    cfg: &TrackerConfig,
    frames: &[GrayImage],
    ref_mask: &RegionMask,
    truth: Option<&[RegionMask]>,
) -> Result<(ReferenceModel, SequenceResult)> {
    let first = frames.first().ok_or_else(|| Error::param("frames", "need at least one frame"))?;
    let model = build_reference(first, ref_mask, cfg)?;
    let result = Tracker::new(&model, cfg)?.run_sequence(frames, truth, &mut ())?;
    Ok((model, result))
}

/// `1 − 2|A ∩ B| / (|A| + |B|)`; two empty masks give 1.
pub fn overlap_error(result: &RegionMask, truth: &RegionMask) -> Result<f64> {
    if (result.width(), result.height()) != (truth.width(), truth.height()) {
        return Err(Error::DimensionMismatch("masks differ in size".into()));
    }
    let total = result.area() + truth.area();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(1.0 - 2.0 * result.intersection_area(truth) as f64 / total as f64)
}

/// True when more than `run` consecutive errors exceed `threshold`.
pub fn sequence_failed(errors: &[f64], threshold: f64, run: usize) -> bool {
    let mut streak = 0;
    for &e in errors {
        streak = if e > threshold { streak + 1 } else { 0 };
        if streak > run {
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic, SyntheticSceneSpec};

    fn clean_square(frames: usize) -> crate::synth::SyntheticSequence {
        let spec = SyntheticSceneSpec { frames, noise_sigma: 0.0, gain_amplitude: 0.0, ..Default::default() };
        generate_synthetic(&spec, 0).unwrap()
    }

    #[test]
    fn slope_rule() {
        let cfg = TrackerConfig::default();
        let falling: Vec<f64> = (0..20).map(|i| 1.0 - 0.01 * i as f64).collect();
        assert_eq!(stopping_criterion(&falling, 100.0, 100.0, &cfg), StopDecision::Continue);
        assert_eq!(stopping_criterion(&[0.3; 20], 100.0, 100.0, &cfg), StopDecision::Slope);
        assert_eq!(stopping_criterion(&[0.3; 19], 100.0, 100.0, &cfg), StopDecision::Continue);
        // Only the most recent window counts.
        let mut hist: Vec<f64> = (0..20).map(|i| i as f64).collect();
        hist.extend(&falling);
        assert_eq!(stopping_criterion(&hist, 100.0, 100.0, &cfg), StopDecision::Continue);
        assert!((trend_slope(&[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn area_rule() {
        let cfg = TrackerConfig::default();
        assert_eq!(stopping_criterion(&[], 100.0, 115.0, &cfg), StopDecision::Area);
        assert_eq!(stopping_criterion(&[], 100.0, 85.0, &cfg), StopDecision::Area);
        assert_eq!(stopping_criterion(&[], 100.0, 110.0, &cfg), StopDecision::Continue);
    }

    #[test]
    fn overlap_cases() {
        let a = RegionMask::rect(20, 20, 2, 2, 8, 8);
        let b = RegionMask::rect(20, 20, 12, 12, 6, 6);
        let half = RegionMask::rect(20, 20, 2, 2, 4, 8);
        assert_eq!(overlap_error(&a, &a).unwrap(), 0.0);
        assert_eq!(overlap_error(&a, &b).unwrap(), 1.0);
        assert!((overlap_error(&a, &half).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(overlap_error(&half, &a).unwrap(), overlap_error(&a, &half).unwrap());
        let empty = RegionMask::empty(20, 20);
        assert_eq!(overlap_error(&empty, &empty).unwrap(), 1.0);
        assert!(overlap_error(&a, &RegionMask::empty(5, 5)).is_err());
    }

    #[test]
    fn failure_needs_a_long_enough_run() {
        assert!(!sequence_failed(&[0.9; 5], 0.8, 5));
        assert!(sequence_failed(&[0.9; 6], 0.8, 5));
        assert!(!sequence_failed(&[0.9, 0.9, 0.9, 0.1, 0.9, 0.9, 0.9], 0.8, 5));
        assert!(!sequence_failed(&[0.8; 10], 0.8, 5));
    }

    #[test]
    fn config_validation() {
        assert!(TrackerConfig::default().validate().is_ok());
        assert!(TrackerConfig { alpha: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrackerConfig { area_change_limit: 1.5, ..Default::default() }.validate().is_err());
        assert!(TrackerConfig { rank: 0, ..Default::default() }.validate().is_err());
        assert!(TrackerConfig { beta: Some(0.0), ..Default::default() }.validate().is_err());
    }

    #[test]
    fn reference_model() {
        let seq = clean_square(1);
        let cfg = TrackerConfig::default();
        let model = build_reference(&seq.frames[0], &seq.masks[0], &cfg).unwrap();
        assert!((model.ref_signature.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(model, build_reference(&seq.frames[0], &seq.masks[0], &cfg).unwrap());
        let d = model.ground_distance(None).unwrap();
        let p = &model.ref_signature.masses;
        assert!(emd(p, p, &d).unwrap().value.abs() < 1e-12);
        let back = ReferenceModel::from_text(&model.to_text()).unwrap();
        assert_eq!(back.ref_mask, model.ref_mask);
        assert_eq!(back.ref_signature, model.ref_signature);
        assert_eq!(back.mean_shift_model, model.mean_shift_model);
        assert_eq!(back.clusters, model.clusters);

        let tiny = RegionMask::rect(128, 128, 10, 10, 5, 5);
        assert!(matches!(build_reference(&seq.frames[0], &tiny, &cfg), Err(Error::RegionTooSmall { area: 25, .. })));
    }

    #[test]
    fn static_scene_settles_quickly() {
        let seq = clean_square(1);
        let cfg = TrackerConfig::default();
        let model = build_reference(&seq.frames[0], &seq.masks[0], &cfg).unwrap();
        let tracker = Tracker::new(&model, &cfg).unwrap();
        let r = tracker.track_frame(0, &seq.frames[0], &seq.masks[0], &mut ()).unwrap();
        assert!(r.iterations < 100, "{} iterations", r.iterations);
        assert_eq!(r.emd_trace.len(), r.iterations);
        assert!(overlap_error(&r.mask, &seq.masks[0]).unwrap() < 0.1);
        assert!(r.final_emd().unwrap() <= r.emd_trace[0]);
    }

    #[test]
    fn follows_a_two_pixel_shift() {
        let seq = clean_square(2);
        let cfg = TrackerConfig::default();
        let (_, res) = run_sequence(&cfg, &seq.frames, &seq.masks[0], Some(&seq.masks)).unwrap();
        assert_eq!(res.frames.len(), 2);
        assert_eq!(res.frames[0].stop_reason, StopReason::Initial);
        let r = &res.frames[1];
        let (got, want) = (r.mask.centroid().unwrap(), seq.masks[1].centroid().unwrap());
        let err = (got.0 - want.0).hypot(got.1 - want.1);
        assert!(err < 2.0, "centroid off by {err}");
        assert!(r.final_emd().unwrap() <= r.emd_trace[0]);
        assert!(!res.failed);
    }

    #[test]
    fn single_frame_returns_reference_mask() {
        let seq = clean_square(1);
        let (_, res) = run_sequence(&TrackerConfig::default(), &seq.frames, &seq.masks[0], None).unwrap();
        assert_eq!(res.frames.len(), 1);
        assert_eq!(res.frames[0].mask, seq.masks[0]);
        assert!(res.overlap.is_none());
    }
}
