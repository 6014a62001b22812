//! End-to-end processing of a dataset: mask ingest, line fitting, vehicle
//! boundaries, temporal filtering, scoring and artifact emission.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary::{boundary_landmarks, DetectionBox};
use crate::config::PipelineConfig;
use crate::eval::{
    error_curves_svg, error_series, match_and_score, metrics_csv, series_stats, timing_report, EvalError,
    KindMetrics, MatchSpec, StageTimes, TimingReport,
};
use crate::filter::{FilterConfig, FilterError, FilterRecord, Tracker};
use crate::geometry::{warp_to_bev, CameraRig, GroundPose};
use crate::landmark::{write_landmarks, LandmarkKind, LineLandmark};
use crate::linefit::{fit_frame, LineFitParams};
use crate::mask::SegMask;
use crate::simulator::{render_camera_masks, Dataset, DatasetError, FileEntry};

pub const RUN_MANIFEST_FILE: &str = "run_manifest.toml";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn io_err(path: &Path, e: impl ToString) -> PipelineError {
    PipelineError::Io { path: path.to_path_buf(), message: e.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineParams {
    pub linefit: LineFitParams,
    pub filter: FilterConfig,
    pub enable_filter: bool,
    pub matching: MatchSpec,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self::from(&PipelineConfig::default())
    }
}

impl From<&PipelineConfig> for PipelineParams {
    fn from(c: &PipelineConfig) -> Self {
        Self { linefit: c.linefit, filter: c.filter, enable_filter: c.pipeline.enable_filter, matching: c.matching }
    }
}

/// A frame that could not be processed; the run continues without it.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFailure {
    pub frame: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunResult {
    /// Per-frame fits and boundaries before filtering.
    pub raw: Vec<Vec<LineLandmark>>,
    /// Per-frame landmarks the pipeline reports.
    pub output: Vec<Vec<LineLandmark>>,
    pub records: Vec<Vec<FilterRecord>>,
    pub times: Vec<StageTimes>,
    pub failures: Vec<FrameFailure>,
    /// Classes per frame without a usable fit (not failures).
    pub skipped_fits: usize,
}

/// Mask-derived and box-derived landmarks of one frame.
pub fn frame_landmarks(
    mask: &SegMask,
    detections: &[DetectionBox],
    rig: &CameraRig,
    params: &LineFitParams,
) -> (Vec<LineLandmark>, usize) {
    let (mut lms, errors) = fit_frame(mask, params, &rig.bev);
    lms.extend(boundary_landmarks(detections, rig));
    (lms, errors.len())
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Runs every frame in order. Frames whose mask cannot be read are recorded
/// as failures and contribute no measurements.
pub fn run_dataset(ds: &Dataset, params: &PipelineParams) -> Result<RunResult, PipelineError> {
    params.linefit.validate().map_err(|e| FilterError::InvalidConfig(e.to_string()))?;
    let mut tracker = Tracker::new(params.filter, ds.rig.bev)?;
    let mut run = RunResult::default();
    for frame in 0..ds.frames() {
        let mut t = StageTimes::default();
        let start = Instant::now();
        let mask = ds.mask(frame);
        t.0[0] = ms(start);

        // Masks arrive already in the BEV frame.
        t.0[1] = 0.0;

        let start = Instant::now();
        let mut raw = Vec::new();
        match &mask {
            Ok(m) => {
                let (lms, errors) = fit_frame(m, &params.linefit, &ds.rig.bev);
                raw = lms;
                run.skipped_fits += errors.len();
            }
            Err(e) => run.failures.push(FrameFailure { frame, message: e.to_string() }),
        }
        t.0[2] = ms(start);

        let start = Instant::now();
        if mask.is_ok() {
            raw.extend(boundary_landmarks(&ds.detections[frame], &ds.rig));
        }
        t.0[3] = ms(start);

        let start = Instant::now();
        let delta: GroundPose = ds.poses[frame].delta();
        let (output, records) = if params.enable_filter {
            let out = tracker.step(&raw, &delta);
            (out.emitted, out.records)
        } else {
            (raw.clone(), Vec::new())
        };
        t.0[4] = ms(start);

        let start = Instant::now();
        run.raw.push(raw);
        run.output.push(output);
        run.records.push(records);
        t.0[5] = ms(start);
        run.times.push(t);
    }
    Ok(run)
}

/// Wall-clock milliseconds of stitching noise-free camera masks into the
/// BEV raster, over up to `samples` evenly spaced frames. Rendering the
/// camera masks is not timed.
pub fn measure_warp(ds: &Dataset, samples: usize) -> Result<Vec<f64>, PipelineError> {
    let frames = ds.frames();
    if frames == 0 || samples == 0 {
        return Ok(Vec::new());
    }
    let scene = ds.manifest.template.build(ds.manifest.seed, frames);
    let n = samples.min(frames);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let frame = k * frames / n;
        let images = render_camera_masks(&scene, frame, &ds.rig).map_err(DatasetError::from)?;
        let start = Instant::now();
        let bev = warp_to_bev(&ds.rig, &images);
        out.push(ms(start));
        std::hint::black_box(bev);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OutlierStats {
    pub frames: usize,
    /// Lane and median measurements on outlier frames.
    pub detections: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub frames: usize,
    pub raw_max_dc0: f64,
    pub raw_var_dc0: f64,
    pub raw_max_dc1: f64,
    pub raw_var_dc1: f64,
    pub filtered_max_dc0: f64,
    pub filtered_var_dc0: f64,
    pub filtered_max_dc1: f64,
    pub filtered_var_dc1: f64,
}

impl SeriesStats {
    /// Filtered maxima and variances all strictly below the raw ones.
    pub fn filtered_is_smoother(&self) -> bool {
        self.filtered_max_dc0 < self.raw_max_dc0
            && self.filtered_var_dc0 < self.raw_var_dc0
            && self.filtered_max_dc1 < self.raw_max_dc1
            && self.filtered_var_dc1 < self.raw_var_dc1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub frames: usize,
    pub failed_frames: usize,
    pub filter_enabled: bool,
    pub output: BTreeMap<LandmarkKind, KindMetrics>,
    pub raw: BTreeMap<LandmarkKind, KindMetrics>,
    pub outliers: OutlierStats,
    /// Nearest-landmark error series of lane and median lines, raw fits
    /// against reported landmarks, over frames where both exist.
    pub series: BTreeMap<LandmarkKind, SeriesStats>,
}

pub fn outlier_stats(ds: &Dataset, run: &RunResult) -> OutlierStats {
    let mut s = OutlierStats::default();
    for (frame, o) in ds.outliers.iter().enumerate() {
        if o.is_none() {
            continue;
        }
        s.frames += 1;
        if run.records.is_empty() || run.records[frame].is_empty() {
            let n = run.raw.get(frame).map_or(0, |r| {
                r.iter().filter(|l| matches!(l.kind, LandmarkKind::Lane | LandmarkKind::Median)).count()
            });
            s.detections += n;
            continue;
        }
        for r in &run.records[frame] {
            if matches!(r.kind, LandmarkKind::Lane | LandmarkKind::Median) && r.raw.is_some() {
                s.detections += 1;
                if r.accepted == Some(false) {
                    s.rejected += 1;
                }
            }
        }
    }
    s
}

pub fn series_for(ds: &Dataset, run: &RunResult, kind: LandmarkKind) -> (Vec<Option<(f64, f64)>>, Vec<Option<(f64, f64)>>) {
    (error_series(&run.raw, &ds.truth, kind), error_series(&run.output, &ds.truth, kind))
}

fn stats_of(raw: &[Option<(f64, f64)>], filtered: &[Option<(f64, f64)>]) -> SeriesStats {
    let both: Vec<((f64, f64), (f64, f64))> =
        raw.iter().zip(filtered).filter_map(|(a, b)| Some(((*a)?, (*b)?))).collect();
    let (raw_max_dc0, raw_var_dc0) = series_stats(both.iter().map(|p| p.0 .0));
    let (raw_max_dc1, raw_var_dc1) = series_stats(both.iter().map(|p| p.0 .1));
    let (filtered_max_dc0, filtered_var_dc0) = series_stats(both.iter().map(|p| p.1 .0));
    let (filtered_max_dc1, filtered_var_dc1) = series_stats(both.iter().map(|p| p.1 .1));
    SeriesStats {
        frames: both.len(),
        raw_max_dc0,
        raw_var_dc0,
        raw_max_dc1,
        raw_var_dc1,
        filtered_max_dc0,
        filtered_var_dc0,
        filtered_max_dc1,
        filtered_var_dc1,
    }
}

pub fn report(ds: &Dataset, run: &RunResult, params: &PipelineParams) -> Result<RunReport, PipelineError> {
    let bev = &ds.rig.bev;
    let output = match_and_score(&run.output, &ds.truth, &params.matching, bev)?;
    let raw = match_and_score(&run.raw, &ds.truth, &params.matching, bev)?;
    let mut series = BTreeMap::new();
    for kind in [LandmarkKind::Lane, LandmarkKind::Median] {
        let (r, f) = series_for(ds, run, kind);
        series.insert(kind, stats_of(&r, &f));
    }
    Ok(RunReport {
        frames: ds.frames(),
        failed_frames: run.failures.len(),
        filter_enabled: params.enable_filter,
        output: output.kinds,
        raw: raw.kinds,
        outliers: outlier_stats(ds, run),
        series,
    })
}

#[derive(Debug, Clone, Serialize)]
struct FilterRow {
    frame: usize,
    kind: LandmarkKind,
    track: Option<u64>,
    accepted: Option<bool>,
    sigma: Option<f64>,
    beta: Option<f64>,
    theta: Option<f64>,
    cx: Option<f64>,
    cy: Option<f64>,
    raw_beta: Option<f64>,
    raw_theta: Option<f64>,
    raw_cx: Option<f64>,
    raw_cy: Option<f64>,
}

const FILTER_HEADER: [&str; 13] = [
    "frame", "kind", "track", "accepted", "sigma", "beta", "theta", "cx", "cy", "raw_beta", "raw_theta", "raw_cx",
    "raw_cy",
];

fn filter_csv(records: &[Vec<FilterRecord>]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(FILTER_HEADER)?;
    for (frame, recs) in records.iter().enumerate() {
        for r in recs {
            w.serialize(FilterRow {
                frame,
                kind: r.kind,
                track: r.track,
                accepted: r.accepted,
                sigma: r.sigma,
                beta: r.filtered.map(|l| l.beta),
                theta: r.filtered.map(|l| l.theta),
                cx: r.filtered.map(|l| l.center[0]),
                cy: r.filtered.map(|l| l.center[1]),
                raw_beta: r.raw.map(|l| l.beta),
                raw_theta: r.raw.map(|l| l.theta),
                raw_cx: r.raw.map(|l| l.center[0]),
                raw_cy: r.raw.map(|l| l.center[1]),
            })?;
        }
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

fn errors_csv(ds: &Dataset, run: &RunResult) -> String {
    use std::fmt::Write as _;
    let mut s = String::from("frame,kind,raw_dc0,raw_dc1,dc0,dc1\n");
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for kind in [LandmarkKind::Lane, LandmarkKind::Median] {
        let (r, f) = series_for(ds, run, kind);
        for frame in 0..r.len() {
            let _ = writeln!(
                s,
                "{frame},{kind},{},{},{},{}",
                cell(r[frame].map(|e| e.0)),
                cell(r[frame].map(|e| e.1)),
                cell(f[frame].map(|e| e.0)),
                cell(f[frame].map(|e| e.1)),
            );
        }
    }
    s
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub version: u32,
    pub dataset_manifest_sha256: String,
    pub failed_frames: Vec<usize>,
    pub config: PipelineConfig,
    pub files: Vec<FileEntry>,
}

/// Writes every run artifact into `out_dir` and lists them, with content
/// hashes, in the run manifest. Nothing here depends on wall-clock time.
pub fn write_outputs(
    out_dir: &Path,
    ds: &Dataset,
    cfg: &PipelineConfig,
    run: &RunResult,
    rep: &RunReport,
) -> Result<PathBuf, PipelineError> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut files = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<(), PipelineError> {
        let path = out_dir.join(name);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        files.push(FileEntry { path: name.to_string(), sha256: crate::simulator::sha256_hex(bytes) });
        Ok(())
    };

    let mut buf = Vec::new();
    write_landmarks(&mut buf, &run.raw).map_err(|e| io_err(&out_dir.join("landmarks_raw.csv"), e))?;
    put("landmarks_raw.csv", &buf)?;
    let mut buf = Vec::new();
    write_landmarks(&mut buf, &run.output).map_err(|e| io_err(&out_dir.join("landmarks.csv"), e))?;
    put("landmarks.csv", &buf)?;
    let buf = filter_csv(&run.records).map_err(|e| io_err(&out_dir.join("filter.csv"), e))?;
    put("filter.csv", &buf)?;

    let text = toml::to_string(rep).map_err(|e| io_err(&out_dir.join("metrics.toml"), e))?;
    put("metrics.toml", text.as_bytes())?;
    let metrics = match_and_score(&run.output, &ds.truth, &cfg.matching, &ds.rig.bev)?;
    put("metrics.csv", metrics_csv(&metrics).as_bytes())?;
    put("errors.csv", errors_csv(ds, run).as_bytes())?;
    let (r, f) = series_for(ds, run, LandmarkKind::Lane);
    put("error_curves.svg", error_curves_svg(&[("raw fit", &r), ("reported", &f)]).as_bytes())?;

    let mpath = ds.dir.join(crate::simulator::MANIFEST_FILE);
    let mbytes = fs::read(&mpath).map_err(|e| io_err(&mpath, e))?;
    let manifest = RunManifest {
        version: 1,
        dataset_manifest_sha256: crate::simulator::sha256_hex(&mbytes),
        failed_frames: run.failures.iter().map(|f| f.frame).collect(),
        config: cfg.clone(),
        files,
    };
    let path = out_dir.join(RUN_MANIFEST_FILE);
    let text = toml::to_string(&manifest).map_err(|e| io_err(&path, e))?;
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// Stage timing of a run plus a sampled camera-stitching measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub pipeline: TimingReport,
    /// Stitching four camera masks into the BEV raster, milliseconds.
    pub camera_warp_mean_ms: f64,
    pub camera_warp_samples: usize,
}

pub fn bench(ds: &Dataset, params: &PipelineParams, warp_samples: usize) -> Result<BenchReport, PipelineError> {
    let run = run_dataset(ds, params)?;
    let warp = measure_warp(ds, warp_samples)?;
    let mean = if warp.is_empty() { 0.0 } else { warp.iter().sum::<f64>() / warp.len() as f64 };
    Ok(BenchReport { pipeline: timing_report(&run.times), camera_warp_mean_ms: mean, camera_warp_samples: warp.len() })
}
