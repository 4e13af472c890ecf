//! Flat `key = value` configuration for the tracker and the frame sequence.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional; unknown and repeated keys are errors.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tracker::TrackerConfig;

/// Where the frames, reference annotation and outputs live.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SequenceSpec {
    /// A directory (all `.pgm`/`.ppm` files, sorted by name) or a file pattern
    /// with a printf-style `%d` / `%0Nd` frame number.
    pub frames: Option<String>,
    pub first_frame: usize,
    /// Inclusive; `None` runs until the first missing file of a pattern.
    pub last_frame: Option<usize>,
    /// Defaults to the first frame.
    pub reference_image: Option<PathBuf>,
    pub reference_mask: Option<PathBuf>,
    /// Ground-truth mask pattern, numbered like `frames`.
    pub truth: Option<String>,
    pub output_dir: Option<PathBuf>,
}

const TRACKER_KEYS: &[&str] = &[
    "rank",
    "bins",
    "kernel",
    "alpha",
    "max_pde_iters",
    "emd_window",
    "area_change_limit",
    "reinit_every",
    "enlarge_factor",
    "band_halfwidth",
    "failure_threshold",
    "failure_run",
    "als_max_sweeps",
    "als_tol",
    "seed",
    "emd_every",
    "beta",
    "mean_shift_features",
    "mean_shift_bins",
    "refine_first_frame",
];

fn value<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config { line, reason: format!("`{key}`: cannot parse `{raw}`") })
}

fn optional<T: FromStr>(line: usize, key: &str, raw: &str) -> Result<Option<T>> {
    if raw == "none" { Ok(None) } else { value(line, key, raw).map(Some) }
}

fn set_tracker(cfg: &mut TrackerConfig, line: usize, key: &str, raw: &str) -> Result<()> {
    match key {
        "rank" => cfg.rank = value(line, key, raw)?,
        "bins" => cfg.bins = value(line, key, raw)?,
        "kernel" => cfg.kernel = value(line, key, raw)?,
        "alpha" => cfg.alpha = value(line, key, raw)?,
        "max_pde_iters" => cfg.max_pde_iters = value(line, key, raw)?,
        "emd_window" => cfg.emd_window = value(line, key, raw)?,
        "area_change_limit" => cfg.area_change_limit = value(line, key, raw)?,
        "reinit_every" => cfg.reinit_every = value(line, key, raw)?,
        "enlarge_factor" => cfg.enlarge_factor = value(line, key, raw)?,
        "band_halfwidth" => cfg.band_halfwidth = value(line, key, raw)?,
        "failure_threshold" => cfg.failure_threshold = value(line, key, raw)?,
        "failure_run" => cfg.failure_run = value(line, key, raw)?,
        "als_max_sweeps" => cfg.als_max_sweeps = value(line, key, raw)?,
        "als_tol" => cfg.als_tol = value(line, key, raw)?,
        "seed" => cfg.seed = value(line, key, raw)?,
        "emd_every" => cfg.emd_every = value(line, key, raw)?,
        "beta" => cfg.beta = optional(line, key, raw)?,
        "mean_shift_features" => cfg.mean_shift_features = value(line, key, raw)?,
        "mean_shift_bins" => cfg.mean_shift_bins = value(line, key, raw)?,
        "refine_first_frame" => cfg.refine_first_frame = value(line, key, raw)?,
        _ => unreachable!("key list and match arms agree"),
    }
    // Defaults are valid, so a failure here is caused by this key.
    cfg.validate().map_err(|e| Error::Config { line, reason: e.to_string() })
}

fn set_sequence(seq: &mut SequenceSpec, line: usize, key: &str, raw: &str) -> Result<bool> {
    match key {
        "frames" => seq.frames = Some(raw.to_string()),
        "first_frame" => seq.first_frame = value(line, key, raw)?,
        "last_frame" => seq.last_frame = optional(line, key, raw)?,
        "reference_image" => seq.reference_image = Some(raw.into()),
        "reference_mask" => seq.reference_mask = Some(raw.into()),
        "truth" => seq.truth = Some(raw.to_string()),
        "output_dir" => seq.output_dir = Some(raw.into()),
        _ => return Ok(false),
    }
    Ok(true)
}

pub fn parse_config(text: &str) -> Result<(TrackerConfig, SequenceSpec)> {
    let mut cfg = TrackerConfig::default();
    let mut seq = SequenceSpec::default();
    let mut seen = HashSet::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, raw) = trimmed
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| Error::Config { line, reason: format!("expected `key = value`, found `{trimmed}`") })?;
        if !seen.insert(key.to_string()) {
            return Err(Error::Config { line, reason: format!("duplicate key `{key}`") });
        }
        if TRACKER_KEYS.contains(&key) {
            set_tracker(&mut cfg, line, key, raw)?;
        } else if !set_sequence(&mut seq, line, key, raw)? {
            return Err(Error::Config { line, reason: format!("unknown key `{key}`") });
        }
    }
    Ok((cfg, seq))
}

pub fn load_config(path: &Path) -> Result<(TrackerConfig, SequenceSpec)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Every tracker key, plus the sequence keys that are set.
pub fn config_to_text(cfg: &TrackerConfig, seq: &SequenceSpec) -> String {
    let mut out = String::new();
    let opt = |v: Option<f64>| v.map_or("none".to_string(), |b| b.to_string());
    let pairs: [(&str, String); 20] = [
        ("rank", cfg.rank.to_string()),
        ("bins", cfg.bins.to_string()),
        ("kernel", cfg.kernel.to_string()),
        ("alpha", cfg.alpha.to_string()),
        ("max_pde_iters", cfg.max_pde_iters.to_string()),
        ("emd_window", cfg.emd_window.to_string()),
        ("area_change_limit", cfg.area_change_limit.to_string()),
        ("reinit_every", cfg.reinit_every.to_string()),
        ("enlarge_factor", cfg.enlarge_factor.to_string()),
        ("band_halfwidth", cfg.band_halfwidth.to_string()),
        ("failure_threshold", cfg.failure_threshold.to_string()),
        ("failure_run", cfg.failure_run.to_string()),
        ("als_max_sweeps", cfg.als_max_sweeps.to_string()),
        ("als_tol", cfg.als_tol.to_string()),
        ("seed", cfg.seed.to_string()),
        ("emd_every", cfg.emd_every.to_string()),
        ("beta", opt(cfg.beta)),
        ("mean_shift_features", cfg.mean_shift_features.to_string()),
        ("mean_shift_bins", cfg.mean_shift_bins.to_string()),
        ("refine_first_frame", cfg.refine_first_frame.to_string()),
    ];
    for (k, v) in pairs {
        let _ = writeln!(out, "{k} = {v}");
    }
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let seq_pairs = [
        ("frames", seq.frames.clone()),
        ("first_frame", Some(seq.first_frame.to_string())),
        ("last_frame", seq.last_frame.map(|v| v.to_string())),
        ("reference_image", path(&seq.reference_image)),
        ("reference_mask", path(&seq.reference_mask)),
        ("truth", seq.truth.clone()),
        ("output_dir", path(&seq.output_dir)),
    ];
    for (k, v) in seq_pairs {
        if let Some(v) = v {
            let _ = writeln!(out, "{k} = {v}");
        }
    }
    out
}

/// Substitutes `n` for the first `%d` or `%0Nd` in `pattern`.
pub fn expand_pattern(pattern: &str, n: usize) -> Result<String> {
    let bad = || Error::param("pattern", format!("`{pattern}` needs a %d or %0Nd frame number"));
    let start = pattern.find('%').ok_or_else(bad)?;
    let rest = &pattern[start + 1..];
    let end = rest.find('d').ok_or_else(bad)?;
    let spec = &rest[..end];
    let width = if spec.is_empty() {
        0
    } else if spec.starts_with('0') && spec.bytes().all(|b| b.is_ascii_digit()) {
        spec.parse::<usize>().map_err(|_| bad())?
    } else {
        return Err(bad());
    };
    Ok(format!("{}{n:0width$}{}", &pattern[..start], &rest[end + 1..]))
}

/// Frame paths named by `spec.frames`, checked to exist.
pub fn resolve_frames(spec: &SequenceSpec) -> Result<Vec<PathBuf>> {
    let frames = spec.frames.as_deref().ok_or_else(|| Error::param("frames", "no frame source configured"))?;
    let dir = Path::new(frames);
    let paths: Vec<PathBuf> = if dir.is_dir() {
        let mut all: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "pgm" || x == "ppm"))
            .collect();
        all.sort();
        let last = spec.last_frame.map_or(all.len(), |l| (l + 1).min(all.len()));
        all.get(spec.first_frame..last).map(<[PathBuf]>::to_vec).unwrap_or_default()
    } else {
        let mut out = Vec::new();
        let mut n = spec.first_frame;
        loop {
            if spec.last_frame.is_some_and(|l| n > l) {
                break;
            }
            let p = PathBuf::from(expand_pattern(frames, n)?);
            if !p.exists() {
                if spec.last_frame.is_some() || out.is_empty() {
                    return Err(Error::io(&p, std::io::Error::from(std::io::ErrorKind::NotFound)));
                }
                break;
            }
            out.push(p);
            n += 1;
        }
        out
    };
    if paths.is_empty() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "no frames found")));
    }
    Ok(paths)
}

/// Truth mask paths aligned with the frames, if a truth pattern is set.
pub fn resolve_truth(spec: &SequenceSpec, count: usize) -> Result<Option<Vec<PathBuf>>> {
    let Some(pattern) = spec.truth.as_deref() else {
        return Ok(None);
    };
    (0..count)
        .map(|i| {
            let p = PathBuf::from(expand_pattern(pattern, spec.first_frame + i)?);
            if p.exists() {
                Ok(p)
            } else {
                Err(Error::io(&p, std::io::Error::from(std::io::ErrorKind::NotFound)))
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signature::KernelKind;

    #[test]
    fn empty_text_gives_defaults() {
        let (cfg, seq) = parse_config("").unwrap();
        assert_eq!(cfg, TrackerConfig::default());
        assert_eq!(cfg.rank, 3);
        assert_eq!(cfg.alpha, 0.0002);
        assert_eq!(seq, SequenceSpec::default());
    }

    #[test]
    fn values_override_defaults() {
        let text = "# comment\nalpha=0.5\n kernel = epanechnikov \nbeta = 2.5\nframes = seq/f%03d.pgm\n";
        let (cfg, seq) = parse_config(text).unwrap();
        assert_eq!(cfg.alpha, 0.5);
        assert_eq!(cfg.kernel, KernelKind::Epanechnikov);
        assert_eq!(cfg.beta, Some(2.5));
        assert_eq!(seq.frames.as_deref(), Some("seq/f%03d.pgm"));
    }

    #[test]
    fn errors_name_line_and_key() {
        let err = parse_config("bins = 8\nalpha=-1\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Config { line: 2, .. }), "{msg}");
        assert!(msg.contains("alpha"), "{msg}");
        assert!(matches!(parse_config("\nspeed = 3").unwrap_err(), Error::Config { line: 2, .. }));
        assert!(matches!(parse_config("rank=3\nrank=4").unwrap_err(), Error::Config { line: 2, .. }));
        assert!(parse_config("rank = three").unwrap_err().to_string().contains("rank"));
        assert!(parse_config("just words").is_err());
        assert!(parse_config("kernel = box").is_err());
    }

    #[test]
    fn serialization_round_trips() {
        let text = "alpha = 0.001\nbeta = 3\nkernel = uniform\nrefine_first_frame = true\nframes = a/%d.pgm\n\
                    reference_mask = m.pgm\noutput_dir = out\nlast_frame = 9\n";
        let (cfg, seq) = parse_config(text).unwrap();
        let again = parse_config(&config_to_text(&cfg, &seq)).unwrap();
        assert_eq!(again, (cfg, seq));
        let defaults = parse_config(&config_to_text(&TrackerConfig::default(), &SequenceSpec::default())).unwrap();
        assert_eq!(defaults.0, TrackerConfig::default());
    }

    #[test]
    fn patterns_expand() {
        assert_eq!(expand_pattern("f%04d.pgm", 7).unwrap(), "f0007.pgm");
        assert_eq!(expand_pattern("%d", 12).unwrap(), "12");
        assert!(expand_pattern("frame.pgm", 1).is_err());
        assert!(expand_pattern("f%xd.pgm", 1).is_err());
    }

    #[test]
    fn frames_resolve_from_pattern_and_directory() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..3 {
            std::fs::write(dir.path().join(format!("f{i:02}.pgm")), b"").unwrap();
        }
        let pattern = dir.path().join("f%02d.pgm").display().to_string();
        let spec = SequenceSpec { frames: Some(pattern), ..Default::default() };
        assert_eq!(resolve_frames(&spec).unwrap().len(), 3);
        let spec = SequenceSpec { last_frame: Some(5), ..spec };
        let err = resolve_frames(&spec).unwrap_err();
        assert!(err.to_string().contains("f03.pgm"), "{err}");
        let spec = SequenceSpec {
            frames: Some(dir.path().display().to_string()),
            first_frame: 1,
            ..Default::default()
        };
        let got = resolve_frames(&spec).unwrap();
        assert_eq!(got.len(), 2);
        assert!(got[0].ends_with("f01.pgm"));
    }
}
