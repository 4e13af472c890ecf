use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use emdtrack_core::config::{config_to_text, load_config, resolve_frames, resolve_truth, SequenceSpec};
use emdtrack_core::pnm::{contour_overlay, load_frame, load_mask, save_mask, save_pgm, save_ppm, write_atomic};
use emdtrack_core::signature::ground_distance_with_beta;
use emdtrack_core::synth::{generate_synthetic, SyntheticSceneSpec};
use emdtrack_core::tracker::{sequence_failed, Tracker};
use emdtrack_core::{
    build_reference, emd, overlap_error, CenteredSignature, Error, GrayImage, ReferenceModel, RegionMask, Result,
    TrackerConfig,
};

const METRICS_HEADER: &str = "frame\titerations\tfinal_emd\tstop_reason\toverlap_error";
const MODEL_FILE: &str = "reference.model";

#[derive(Parser)]
#[command(name = "emdtrack", version, about = "Contour tracking by EMD minimization over Tensor-SIFT signatures")]
struct Cli {
    /// key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the reference model from an annotated image.
    BuildRef(BuildRefArgs),
    /// Track the configured sequence.
    Track(TrackArgs),
    /// Generate a synthetic sequence with ground truth.
    Synth(SynthArgs),
    /// Overlap errors of tracked masks against ground truth.
    Eval(EvalArgs),
    /// EMD between two signature files.
    Emd(EmdArgs),
}

#[derive(Args)]
struct OutDir {
    /// Output directory (defaults to `output_dir` from the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BuildRefArgs {
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long)]
    mask: Option<PathBuf>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct TrackArgs {
    /// Frame directory or `%0Nd` pattern.
    #[arg(long)]
    frames: Option<String>,
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Ground-truth mask pattern.
    #[arg(long)]
    truth: Option<String>,
    /// Previously built reference model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Also write each frame's EMD trace.
    #[arg(long)]
    traces: bool,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    frames: usize,
    #[arg(long, default_value_t = 4.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.1)]
    gain: f64,
    /// Per-frame translation `dx,dy`.
    #[arg(long, default_value = "2,0", value_parser = parse_pair)]
    velocity: (f64, f64),
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory holding `mask_NNN.pgm` results.
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long)]
    truth: Option<String>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct EmdArgs {
    reference: PathBuf,
    candidate: PathBuf,
    /// Ground-distance scale.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `dx,dy`")?;
    let a = a.trim().parse().map_err(|_| format!("bad number `{a}`"))?;
    let b = b.trim().parse().map_err(|_| format!("bad number `{b}`"))?;
    Ok((a, b))
}

struct Context {
    cfg: TrackerConfig,
    seq: SequenceSpec,
}

impl Context {
    fn load(cli: &Cli) -> Result<Self> {
        let (mut cfg, seq) = match &cli.config {
            Some(p) => load_config(p)?,
            None => (TrackerConfig::default(), SequenceSpec::default()),
        };
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        Ok(Context { cfg, seq })
    }

    fn out_dir(&self, out: &OutDir) -> Result<PathBuf> {
        let dir = out
            .out
            .clone()
            .or_else(|| self.seq.output_dir.clone())
            .ok_or_else(|| Error::InvalidParameter { name: "out", reason: "no output directory given".into() })?;
        std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
        Ok(dir)
    }
}

fn required<T: Clone>(flag: &Option<T>, configured: &Option<T>, name: &'static str) -> Result<T> {
    flag.clone()
        .or_else(|| configured.clone())
        .ok_or_else(|| Error::InvalidParameter { name, reason: "not given on the command line or in the config".into() })
}

fn load_gray(path: &Path) -> Result<GrayImage> {
    Ok(load_frame(path)?.gray)
}

fn build_ref(ctx: &Context, args: &BuildRefArgs) -> Result<()> {
    let mask_path = required(&args.mask, &ctx.seq.reference_mask, "mask")?;
    let image_path = match (&args.image, &ctx.seq.reference_image) {
        (Some(p), _) | (None, Some(p)) => p.clone(),
        (None, None) => resolve_frames(&ctx.seq)?.remove(0),
    };
    let model = build_reference(&load_gray(&image_path)?, &load_mask(&mask_path)?, &ctx.cfg)?;
    let dir = ctx.out_dir(&args.out)?;
    let path = dir.join(MODEL_FILE);
    write_atomic(&path, model.to_text().as_bytes())?;
    println!("{}", path.display());
    Ok(())
}

fn track(ctx: &Context, args: &TrackArgs) -> Result<()> {
    let mut seq = ctx.seq.clone();
    if args.frames.is_some() {
        seq.frames = args.frames.clone();
    }
    if args.truth.is_some() {
        seq.truth = args.truth.clone();
    }
    let frame_paths = resolve_frames(&seq)?;
    let frames = frame_paths.iter().map(|p| load_gray(p)).collect::<Result<Vec<_>>>()?;
    let truth = resolve_truth(&seq, frames.len())?
        .map(|paths| paths.iter().map(|p| load_mask(p)).collect::<Result<Vec<RegionMask>>>())
        .transpose()?;

    let model = match &args.model {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
            ReferenceModel::from_text(&text)?
        }
        None => {
            let mask = load_mask(&required(&args.mask, &seq.reference_mask, "mask")?)?;
            let ref_image = match &seq.reference_image {
                Some(p) => load_gray(p)?,
                None => frames[0].clone(),
            };
            build_reference(&ref_image, &mask, &ctx.cfg)?
        }
    };
    let dir = ctx.out_dir(&args.out)?;
    info!("tracking {} frames into {}", frames.len(), dir.display());
    let result = Tracker::new(&model, &ctx.cfg)?.run_sequence(&frames, truth.as_deref(), &mut ())?;

    let mut metrics = format!("{METRICS_HEADER}\n");
    for (t, (r, frame)) in result.frames.iter().zip(&frames).enumerate() {
        save_mask(&dir.join(format!("mask_{t:03}.pgm")), &r.mask)?;
        save_ppm(&dir.join(format!("overlay_{t:03}.ppm")), &contour_overlay(frame, &r.contour))?;
        if args.traces {
            let mut trace = String::from("iteration\temd\n");
            for (i, e) in r.emd_trace.iter().enumerate() {
                let _ = writeln!(trace, "{i}\t{e}");
            }
            write_atomic(&dir.join(format!("trace_{t:03}.tsv")), trace.as_bytes())?;
        }
        let emd = r.final_emd().map_or("NA".to_string(), |e| format!("{e:.6}"));
        let err = result.overlap.as_ref().map_or("NA".to_string(), |o| format!("{:.6}", o[t]));
        let _ = writeln!(metrics, "{t}\t{}\t{emd}\t{}\t{err}", r.iterations, r.stop_reason);
    }
    write_atomic(&dir.join("metrics.tsv"), metrics.as_bytes())?;
    write_atomic(&dir.join("run.cfg"), config_to_text(&ctx.cfg, &seq).as_bytes())?;
    if let Some(o) = &result.overlap {
        println!("frames {} mean_error {:.4} max_error {:.4} failed {}", o.len(), mean(o), max(o), result.failed);
    } else {
        println!("frames {}", result.frames.len());
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

fn synth(ctx: &Context, args: &SynthArgs) -> Result<()> {
    let spec = SyntheticSceneSpec {
        frames: args.frames,
        noise_sigma: args.noise,
        gain_amplitude: args.gain,
        velocity: args.velocity,
        ..Default::default()
    };
    let seq = generate_synthetic(&spec, ctx.cfg.seed)?;
    let dir = ctx.out_dir(&args.out)?;
    for (t, (f, m)) in seq.frames.iter().zip(&seq.masks).enumerate() {
        save_pgm(&dir.join(format!("frame_{t:03}.pgm")), f)?;
        save_mask(&dir.join(format!("truth_{t:03}.pgm")), m)?;
    }
    let spec = SequenceSpec {
        frames: Some(dir.join("frame_%03d.pgm").display().to_string()),
        reference_mask: Some(dir.join("truth_000.pgm")),
        truth: Some(dir.join("truth_%03d.pgm").display().to_string()),
        ..Default::default()
    };
    let cfg_path = dir.join("sequence.cfg");
    write_atomic(&cfg_path, config_to_text(&ctx.cfg, &spec).as_bytes())?;
    println!("{}", cfg_path.display());
    Ok(())
}

fn eval(ctx: &Context, args: &EvalArgs) -> Result<()> {
    let dir = ctx.out_dir(&args.out)?;
    let results = args.results.clone().unwrap_or_else(|| dir.clone());
    let mut seq = ctx.seq.clone();
    if args.truth.is_some() {
        seq.truth = args.truth.clone();
    }
    seq.frames = Some(results.join("mask_%03d.pgm").display().to_string());
    seq.first_frame = 0;
    let masks = resolve_frames(&seq)?;
    let truth = resolve_truth(&SequenceSpec { first_frame: ctx.seq.first_frame, ..seq.clone() }, masks.len())?
        .ok_or_else(|| Error::InvalidParameter { name: "truth", reason: "no ground-truth pattern given".into() })?;
    let mut out = String::from("frame\toverlap_error\n");
    let mut errors = Vec::with_capacity(masks.len());
    for (t, (m, g)) in masks.iter().zip(&truth).enumerate() {
        let e = overlap_error(&load_mask(m)?, &load_mask(g)?)?;
        let _ = writeln!(out, "{t}\t{e:.6}");
        errors.push(e);
    }
    write_atomic(&dir.join("eval.tsv"), out.as_bytes())?;
    let failed = sequence_failed(&errors, ctx.cfg.failure_threshold, ctx.cfg.failure_run);
    println!("frames {} mean_error {:.4} max_error {:.4} failed {failed}", errors.len(), mean(&errors), max(&errors));
    Ok(())
}

fn read_signature(path: &Path) -> Result<CenteredSignature> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    CenteredSignature::from_text(&text)
}

fn emd_cmd(args: &EmdArgs) -> Result<()> {
    let a = read_signature(&args.reference)?;
    let b = read_signature(&args.candidate)?;
    let d = ground_distance_with_beta(&a.centers, &b.centers, args.beta)?;
    let v = emd(&a.signature.masses, &b.signature.masses, &d)?;
    println!("{:?}", v.value);
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let ctx = Context::load(cli)?;
    match &cli.command {
        Command::BuildRef(a) => build_ref(&ctx, a),
        Command::Track(a) => track(&ctx, a),
        Command::Synth(a) => synth(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Emd(a) => emd_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
