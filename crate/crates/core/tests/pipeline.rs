use std::fs;
use std::path::Path;

use linemark::config::PipelineConfig;
use linemark::geometry::CameraRig;
use linemark::landmark::{read_landmarks, LandmarkKind};
use linemark::pipeline::{report, run_dataset, write_outputs, PipelineParams, RunManifest, RUN_MANIFEST_FILE};
use linemark::simulator::{export_sequence, load_dataset, sha256_hex, Dataset, NoiseSpec, SceneTemplate};

fn dataset(dir: &Path, template: SceneTemplate, seed: u64, frames: usize, noise: &NoiseSpec) -> Dataset {
    let scene = template.build(seed, frames);
    export_sequence(&scene, &CameraRig::default_rig(), noise, dir).unwrap();
    load_dataset(dir).unwrap()
}

#[test]
fn zero_noise_is_perfect_on_every_template() {
    for template in SceneTemplate::ALL {
        let dir = tempfile::tempdir().unwrap();
        let ds = dataset(dir.path(), template, 11, 60, &NoiseSpec::zero());
        let params = PipelineParams::default();
        let run = run_dataset(&ds, &params).unwrap();
        assert!(run.failures.is_empty());
        let rep = report(&ds, &run, &params).unwrap();
        for kind in LandmarkKind::ALL {
            let m = rep.output[&kind];
            assert_eq!((m.fd, m.md), (0.0, 0.0), "{template} {kind}: {m:?}");
            assert!(m.truths > 0);
        }
    }
}

#[test]
fn filter_lowers_error_peaks_under_outliers() {
    let dir = tempfile::tempdir().unwrap();
    let noise = NoiseSpec { outlier_rate: 0.05, ..NoiseSpec::default() };
    let ds = dataset(dir.path(), SceneTemplate::StraightAisle, 5, 200, &noise);
    let on = PipelineParams::default();
    let off = PipelineParams { enable_filter: false, ..on };
    let run_on = run_dataset(&ds, &on).unwrap();
    let run_off = run_dataset(&ds, &off).unwrap();
    let rep_on = report(&ds, &run_on, &on).unwrap();
    let rep_off = report(&ds, &run_off, &off).unwrap();
    assert!(rep_on.outliers.frames > 0);
    assert_eq!(rep_on.outliers.rejected, rep_on.outliers.detections);
    assert_eq!(rep_off.outliers.rejected, 0);
    for kind in [LandmarkKind::Lane, LandmarkKind::Median] {
        let s = rep_on.series[&kind];
        assert!(s.filtered_is_smoother(), "{kind}: {s:?}");
        // With the filter off the reported series is the raw one.
        let s_off = rep_off.series[&kind];
        assert_eq!(s_off.filtered_max_dc0, s_off.raw_max_dc0);
        assert!(s.filtered_max_dc0 < s_off.filtered_max_dc0);
        assert!(s.filtered_max_dc1 < s_off.filtered_max_dc1);
    }
}

#[test]
fn outputs_are_deterministic_and_hashed() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(&dir.path().join("ds"), SceneTemplate::RotatedAisle, 2, 30, &NoiseSpec::default());
    let cfg = PipelineConfig::default();
    let params = PipelineParams::from(&cfg);
    let mut manifests = Vec::new();
    for name in ["a", "b"] {
        let run = run_dataset(&ds, &params).unwrap();
        let rep = report(&ds, &run, &params).unwrap();
        let out = dir.path().join(name);
        let path = write_outputs(&out, &ds, &cfg, &run, &rep).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let manifest: RunManifest = toml::from_str(&text).unwrap();
        for f in &manifest.files {
            let bytes = fs::read(out.join(&f.path)).unwrap();
            assert_eq!(sha256_hex(&bytes), f.sha256, "{}", f.path);
        }
        manifests.push(text);
    }
    assert_eq!(manifests[0], manifests[1]);
    let a = dir.path().join("a");
    let listed: Vec<String> = toml::from_str::<RunManifest>(&manifests[0]).unwrap().files.into_iter().map(|f| f.path).collect();
    let mut on_disk: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != RUN_MANIFEST_FILE)
        .collect();
    on_disk.sort();
    let mut listed_sorted = listed.clone();
    listed_sorted.sort();
    assert_eq!(listed_sorted, on_disk);
}

#[test]
fn emitted_landmarks_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(&dir.path().join("ds"), SceneTemplate::StaticAisle, 4, 12, &NoiseSpec::default());
    let cfg = PipelineConfig::default();
    let params = PipelineParams::from(&cfg);
    let run = run_dataset(&ds, &params).unwrap();
    let rep = report(&ds, &run, &params).unwrap();
    let out = dir.path().join("run");
    write_outputs(&out, &ds, &cfg, &run, &rep).unwrap();
    let back = read_landmarks(fs::File::open(out.join("landmarks.csv")).unwrap(), ds.frames()).unwrap();
    assert_eq!(back.len(), run.output.len());
    for (a, b) in back.iter().zip(&run.output) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert_eq!((x.kind, x.beta, x.theta, x.center), (y.kind, y.beta, y.theta, y.center));
        }
    }
    let filter_csv = fs::read_to_string(out.join("filter.csv")).unwrap();
    assert!(filter_csv.starts_with("frame,kind,track,accepted,sigma,"));
}

#[test]
fn corrupt_mask_fails_only_its_frame() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(dir.path(), SceneTemplate::StraightAisle, 1, 10, &NoiseSpec::zero());
    let path = ds.mask_path(4);
    let mut bytes = fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&path, bytes).unwrap();
    let run = run_dataset(&ds, &PipelineParams::default()).unwrap();
    assert_eq!(run.failures.len(), 1);
    assert_eq!(run.failures[0].frame, 4);
    assert!(run.raw[4].is_empty());
    assert!(run.output[3].len() > 0 && run.output[5].len() > 0);
}

#[test]
fn every_stage_is_timed() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(dir.path(), SceneTemplate::StraightAisle, 0, 5, &NoiseSpec::default());
    let run = run_dataset(&ds, &PipelineParams::default()).unwrap();
    assert_eq!(run.times.len(), 5);
    for t in &run.times {
        assert!(t.0.iter().all(|ms| *ms >= 0.0 && ms.is_finite()));
        assert!(t.0[2] > 0.0, "line fitting takes measurable time");
    }
}
