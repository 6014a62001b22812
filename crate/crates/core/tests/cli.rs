use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn linemark(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linemark")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["generate", "--out", s(dir), "--frames", "20"];
    args.extend_from_slice(extra);
    let o = linemark(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn generate_is_bit_identical() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    generate(&a, &["--seed", "9"]);
    generate(&b, &["--seed", "9"]);
    let (ta, tb) = (tree(&a), tree(&b));
    assert_eq!(ta.len(), 20 + 6);
    assert_eq!(ta, tb);
}

#[test]
fn zero_frames_is_fine() {
    let t = tempfile::tempdir().unwrap();
    let o = linemark(&["generate", "--out", s(t.path()), "--frames", "0"]);
    assert_eq!(code(&o), 0);
    assert!(t.path().join("manifest.toml").is_file());
    let run = t.path().join("run");
    let o = linemark(&["run", "--dataset", s(t.path()), "--out", s(&run)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn run_zero_noise_then_score_agrees() {
    let t = tempfile::tempdir().unwrap();
    let ds = t.path().join("ds");
    let out = t.path().join("run");
    generate(&ds, &["--zero-noise"]);
    let o = linemark(&["run", "--dataset", s(&ds), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.matches("fd=0.0000 md=0.0000 accuracy=1.0000").count(), 4, "{stdout}");
    for f in ["landmarks.csv", "landmarks_raw.csv", "filter.csv", "metrics.toml", "metrics.csv", "errors.csv", "error_curves.svg", "run_manifest.toml"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let o = linemark(&["score", "-p", s(&out.join("landmarks.csv")), "-t", s(&ds.join("truth.csv"))]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap().matches("accuracy=1.0000").count(), 4);
}

#[test]
fn run_twice_gives_identical_outputs() {
    let t = tempfile::tempdir().unwrap();
    let ds = t.path().join("ds");
    generate(&ds, &["--outlier-rate", "0.2"]);
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(code(&linemark(&["run", "--dataset", s(&ds), "--out", s(out)])), 0);
    }
    assert_eq!(tree(&a), tree(&b));
}

#[test]
fn config_file_and_overrides() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("cfg.toml");
    fs::write(&cfg, "version = 1\noutput = \"unused\"\n[scene]\ntemplate = \"static_aisle\"\nframes = 3\n[filter]\nlambda = [0.5, 1.0, 2.0]\n").unwrap();
    let ds = t.path().join("ds");
    let o = linemark(&["generate", "-c", s(&cfg), "--out", s(&ds)]);
    assert_eq!(code(&o), 0);
    let manifest = fs::read_to_string(ds.join("manifest.toml")).unwrap();
    assert!(manifest.contains("static_aisle"));
    assert!(manifest.contains("frames = 3"));
    let out = t.path().join("run");
    let o = linemark(&["run", "-c", s(&cfg), "-d", s(&ds), "-o", s(&out), "--sigma-max", "7"]);
    assert_eq!(code(&o), 0);
    let rm = fs::read_to_string(out.join("run_manifest.toml")).unwrap();
    assert!(rm.contains("lambda = [0.5, 1.0, 2.0]"), "{rm}");
    assert!(rm.contains("sigma_max = 7.0"), "{rm}");
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    // Argument and config problems.
    assert_eq!(code(&linemark(&["frobnicate"])), 1);
    assert_eq!(code(&linemark(&["--help"])), 0);
    assert_eq!(code(&linemark(&["generate", "--out", s(t.path()), "--template", "maze"])), 1);
    assert_eq!(code(&linemark(&["generate", "--out", s(t.path()), "--p-drop", "1.5"])), 1);
    assert_eq!(code(&linemark(&["generate", "--frames", "3"])), 1);
    let bad = t.path().join("bad.toml");
    fs::write(&bad, "version = 1\nunknown = 1\n").unwrap();
    assert_eq!(code(&linemark(&["generate", "-c", s(&bad), "--out", s(t.path())])), 1);

    // Missing dataset: data error, nothing written.
    let out = t.path().join("never");
    assert_eq!(code(&linemark(&["run", "--dataset", s(&t.path().join("missing")), "--out", s(&out)])), 2);
    assert!(!out.exists());

    // A corrupted mask fails its frame; the run still completes.
    let ds = t.path().join("ds");
    generate(&ds, &[]);
    let mask = ds.join("masks").join("frame_00007.mask");
    let mut bytes = fs::read(&mask).unwrap();
    bytes[10] ^= 0xff;
    fs::write(&mask, bytes).unwrap();
    let out = t.path().join("run");
    let o = linemark(&["run", "--dataset", s(&ds), "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("frame 7"));
    assert!(fs::read_to_string(out.join("run_manifest.toml")).unwrap().contains("failed_frames = [7]"));

    // Tampered metadata is caught at load.
    fs::write(ds.join("poses.csv"), "frame,t,x,y,yaw,dx,dy,dyaw\n").unwrap();
    assert_eq!(code(&linemark(&["run", "--dataset", s(&ds), "--out", s(&out)])), 2);
}

#[test]
fn bench_reports_every_stage() {
    let t = tempfile::tempdir().unwrap();
    let ds = t.path().join("ds");
    generate(&ds, &[]);
    let out = t.path().join("bench");
    let o = linemark(&["bench", "--dataset", s(&ds), "--out", s(&out), "--warp-samples", "2"]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8(o.stdout).unwrap();
    for stage in linemark::eval::STAGES {
        assert!(stdout.contains(stage), "{stage} missing from {stdout}");
    }
    let timing = fs::read_to_string(out.join("timing.toml")).unwrap();
    assert!(timing.contains("camera_warp_samples = 2"));
}
