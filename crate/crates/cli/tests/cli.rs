use std::path::Path;
use std::process::{Command, Output};

fn emdtrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emdtrack")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_track_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("out");
    let (data_s, out_s) = (data.to_str().unwrap(), out.to_str().unwrap());

    let o = emdtrack(&["--seed", "3", "synth", "--frames", "4", "--out", data_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = data.join("sequence.cfg");
    assert_eq!(stdout(&o).trim(), cfg.display().to_string());
    assert!(data.join("frame_003.pgm").exists() && data.join("truth_003.pgm").exists());

    let cfg_s = cfg.to_str().unwrap();
    let o = emdtrack(&["--config", cfg_s, "track", "--out", out_s, "--traces"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = std::fs::read_to_string(out.join("metrics.tsv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("frame\titerations\tfinal_emd\tstop_reason\toverlap_error"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][3], "initial");
    for r in &rows {
        let e: f64 = r[4].parse().unwrap();
        assert!(e < 0.3, "overlap error {e}");
    }
    for name in ["mask_003.pgm", "overlay_003.ppm", "trace_002.tsv", "run.cfg"] {
        assert!(out.join(name).exists(), "{name}");
    }

    let o = emdtrack(&["--config", cfg_s, "eval", "--out", out_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("frames 4"), "{}", stdout(&o));
    assert!(stdout(&o).contains("failed false"));
    assert!(out.join("eval.tsv").exists());
}

#[test]
fn build_ref_writes_a_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    let o = emdtrack(&["synth", "--frames", "2", "--out", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = data.join("sequence.cfg");
    let models = dir.path().join("m");
    let o = emdtrack(&["--config", cfg.to_str().unwrap(), "build-ref", "--out", models.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let model = models.join("reference.model");
    assert!(std::fs::read_to_string(&model).unwrap().starts_with("refmodel v1"));
    let out = dir.path().join("o");
    let o = emdtrack(&[
        "--config",
        cfg.to_str().unwrap(),
        "track",
        "--model",
        model.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("mask_001.pgm").exists());
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing_%03d.pgm");
    let o = emdtrack(&[
        "track",
        "--frames",
        missing.to_str().unwrap(),
        "--mask",
        "m.pgm",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nothing_000.pgm"), "{}", stderr(&o));
}

#[test]
fn identical_signatures_have_zero_distance() {
    let dir = tempfile::tempdir().unwrap();
    let sig = "signature v1\nsize 3 2\n0.5 0 0\n0.25 10 0\n0.25 0 10\n";
    let a = dir.path().join("a.sig");
    let b = dir.path().join("b.sig");
    std::fs::write(&a, sig).unwrap();
    std::fs::write(&b, sig).unwrap();
    let o = emdtrack(&["emd", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "0.0");

    std::fs::write(&b, "signature v1\nsize 3 2\n0.25 0 0\n0.5 10 0\n0.25 0 10\n").unwrap();
    let o = emdtrack(&["emd", a.to_str().unwrap(), b.to_str().unwrap(), "--beta", "1"]);
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!((v - 0.25 * (1.0 - (-10f64).exp())).abs() < 1e-12, "{v}");
}

#[test]
fn bad_flags_exit_with_usage() {
    let o = emdtrack(&["track", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    assert_eq!(emdtrack(&[]).status.code(), Some(2));
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "rank = 3\nalpha = -1\n").unwrap();
    let o = emdtrack(&["--config", cfg.to_str().unwrap(), "synth", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("line 2") && err.contains("alpha"), "{err}");
    assert!(!Path::new(&dir.path().join("frame_000.pgm")).exists());
}
