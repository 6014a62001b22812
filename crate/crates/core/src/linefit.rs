//! Scan-line vectorization of segmentation masks.
//!
//! Horizontal scan lines at a fixed interval cut through the stripes of one
//! class. Each maximal run of class cells on a scan line contributes an
//! enter/exit pair of intersection points. The most frequent intersection
//! count `c*` is taken as the number of visible lines times two; only rows
//! with exactly `c*` points are kept, and the midpoint of the k-th pair on
//! every kept row is a sample of the k-th line. Each line is then fitted by
//! least squares in the `u = beta * v + theta` form.
//!
//! Longitudinal parking lines are scanned in a frame rotated so that they run
//! vertically, with over-long runs (horizontal stripes) discarded.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BevSpec;
use crate::landmark::{LandmarkKind, LineLandmark};
use crate::mask::{Class, SegMask};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LineFitError {
    #[error("no {0} foreground on any scan line")]
    EmptyMask(Class),
    #[error("degenerate fit for line {line}: {samples} samples, spread {spread}")]
    DegenerateFit { line: usize, samples: usize, spread: f64 },
    #[error("modal count {0} is not an even positive number")]
    InvalidCount(usize),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineFitParams {
    /// Distance between scan lines, in rows.
    pub interval: usize,
    /// Runs longer than this many cells are dropped by the parking scan.
    pub run_cap: usize,
    /// Minimum kept rows per fitted line.
    pub min_samples: usize,
    /// Runs shorter than this many cells are ignored.
    pub min_run: usize,
    /// Runs separated by at most this many background cells are merged.
    pub max_gap: usize,
}

impl Default for LineFitParams {
    fn default() -> Self {
        Self { interval: 8, run_cap: 40, min_samples: 5, min_run: 2, max_gap: 2 }
    }
}

impl LineFitParams {
    pub fn validate(&self) -> Result<(), LineFitError> {
        if self.interval == 0 {
            return Err(LineFitError::InvalidParams("interval must be >= 1".into()));
        }
        if self.run_cap == 0 {
            return Err(LineFitError::InvalidParams("run_cap must be >= 1".into()));
        }
        if self.min_run == 0 {
            return Err(LineFitError::InvalidParams("min_run must be >= 1".into()));
        }
        if self.min_run > self.run_cap {
            return Err(LineFitError::InvalidParams("min_run must not exceed run_cap".into()));
        }
        if self.min_samples < 2 {
            return Err(LineFitError::InvalidParams("min_samples must be >= 2".into()));
        }
        Ok(())
    }
}

/// Rotation of the scan frame about the raster center. A scan-frame offset
/// `(u', v')` maps to source offset `(cos a u' + sin a v', -sin a u' + cos a v')`,
/// with `v` pointing up the raster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRotation {
    pub angle: f64,
    pub center_row: f64,
    pub center_col: f64,
}

impl ScanRotation {
    pub fn about_center(angle: f64, rows: usize, cols: usize) -> Self {
        Self {
            angle,
            center_row: (rows as f64 - 1.0) / 2.0,
            center_col: (cols as f64 - 1.0) / 2.0,
        }
    }

    /// Scan-frame `(row, col)` to source `(row, col)`.
    pub fn to_source(&self, row: f64, col: f64) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        let u = col - self.center_col;
        let v = self.center_row - row;
        let su = c * u + s * v;
        let sv = -s * u + c * v;
        (self.center_row - sv, self.center_col + su)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    /// Row of the scan line in the scan frame.
    pub row: usize,
    /// Intersection columns in ascending order, as enter/exit pairs.
    pub points: Vec<f64>,
}

impl ScanRow {
    pub fn count(&self) -> usize {
        self.points.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanProfile {
    pub class: Class,
    pub rows: Vec<ScanRow>,
    /// Ego row of the source raster, for the `v` coordinate of samples.
    pub ego_row: f64,
    pub rotation: Option<ScanRotation>,
}

impl ScanProfile {
    pub fn counts(&self) -> Vec<usize> {
        self.rows.iter().map(ScanRow::count).collect()
    }

    /// Scan lines that hit any foreground of the class.
    pub fn rows_with_foreground(&self) -> usize {
        self.rows.iter().filter(|r| r.count() > 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.rows_with_foreground() == 0
    }

    fn to_lane(&self, row: f64, col: f64) -> (f64, f64) {
        let (r, c) = match &self.rotation {
            Some(rot) => rot.to_source(row, col),
            None => (row, col),
        };
        (c, self.ego_row - r)
    }
}

/// Which runs of a scan line count as intersections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunRules {
    pub min_run: usize,
    pub max_gap: usize,
    /// Runs of at least this many cells are dropped.
    pub cap: Option<usize>,
}

impl RunRules {
    /// Every maximal run is an intersection pair.
    pub const RAW: RunRules = RunRules { min_run: 1, max_gap: 0, cap: None };

    pub fn from_params(params: &LineFitParams, capped: bool) -> Self {
        Self { min_run: params.min_run, max_gap: params.max_gap, cap: capped.then_some(params.run_cap) }
    }
}

/// Intersection points of one raster row with the runs of `class`: maximal
/// runs, merged across short gaps, then filtered by length.
pub fn row_points(cells: impl Iterator<Item = u8>, class: Class, rules: &RunRules) -> Vec<f64> {
    let target = class.byte();
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start: Option<usize> = None;
    let push = |s: usize, e: usize, runs: &mut Vec<(usize, usize)>| match runs.last_mut() {
        Some(last) if s - last.1 - 1 <= rules.max_gap => last.1 = e,
        _ => runs.push((s, e)),
    };
    let mut n = 0;
    for (i, b) in cells.enumerate() {
        n = i + 1;
        match (b == target, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                push(s, i - 1, &mut runs);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        push(s, n - 1, &mut runs);
    }
    runs.into_iter()
        .filter(|(s, e)| {
            let len = e - s + 1;
            len >= rules.min_run && rules.cap.is_none_or(|cap| len <= cap)
        })
        .flat_map(|(s, e)| [s as f64, e as f64])
        .collect()
}

fn scan_rows(rows: usize, interval: usize) -> impl Iterator<Item = usize> {
    (0..rows).step_by(interval.max(1))
}

/// Traverses `mask` with horizontal scan lines every `interval` rows.
pub fn scan(mask: &SegMask, class: Class, interval: usize, rules: &RunRules, bev: &BevSpec) -> ScanProfile {
    let rows = scan_rows(mask.rows(), interval)
        .map(|row| ScanRow { row, points: row_points(mask.row(row).iter().copied(), class, rules) })
        .collect();
    ScanProfile { class, rows, ego_row: bev.origin_row, rotation: None }
}

/// Scans `mask` as if it had first been rotated by `angle` about its center
/// (see [`rotate_mask`]).
pub fn scan_rotated(
    mask: &SegMask,
    class: Class,
    angle: f64,
    interval: usize,
    rules: &RunRules,
    bev: &BevSpec,
) -> ScanProfile {
    let rot = ScanRotation::about_center(angle, mask.rows(), mask.cols());
    let rows = scan_rows(mask.rows(), interval)
        .map(|row| {
            let cells = (0..mask.cols()).map(|col| sample(mask, &rot, row, col));
            ScanRow { row, points: row_points(cells, class, rules) }
        })
        .collect();
    ScanProfile { class, rows, ego_row: bev.origin_row, rotation: Some(rot) }
}

fn sample(mask: &SegMask, rot: &ScanRotation, row: usize, col: usize) -> u8 {
    let (r, c) = rot.to_source(row as f64, col as f64);
    let (r, c) = (r.round(), c.round());
    if r < 0.0 || c < 0.0 || r >= mask.rows() as f64 || c >= mask.cols() as f64 {
        0
    } else {
        mask.byte(r as usize, c as usize)
    }
}

/// Nearest-neighbor rotation of the whole raster, same convention as
/// [`scan_rotated`].
pub fn rotate_mask(mask: &SegMask, angle: f64) -> SegMask {
    let rot = ScanRotation::about_center(angle, mask.rows(), mask.cols());
    let mut out = SegMask::new(mask.rows(), mask.cols());
    for row in 0..mask.rows() {
        for col in 0..mask.cols() {
            let b = sample(mask, &rot, row, col);
            out.set(row, col, Class::from_byte(b).expect("valid label"));
        }
    }
    out
}

/// Most frequent nonzero intersection count; ties go to the larger count.
pub fn modal_count(profile: &ScanProfile) -> Result<usize, LineFitError> {
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for c in profile.counts() {
        // Odd counts cannot come from enter/exit pairs.
        if c > 0 && c % 2 == 0 {
            *hist.entry(c).or_default() += 1;
        }
    }
    hist.into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(count, _)| count)
        .ok_or(LineFitError::EmptyMask(profile.class))
}

/// Per-line `(u, v)` samples from the rows holding exactly `c_star` points.
pub fn line_samples(profile: &ScanProfile, c_star: usize) -> Result<Vec<Vec<(f64, f64)>>, LineFitError> {
    if c_star == 0 || c_star % 2 != 0 {
        return Err(LineFitError::InvalidCount(c_star));
    }
    let mut lines = vec![Vec::new(); c_star / 2];
    for row in profile.rows.iter().filter(|r| r.count() == c_star) {
        for (k, pair) in row.points.chunks_exact(2).enumerate() {
            let mid = (pair[0] + pair[1]) / 2.0;
            lines[k].push(profile.to_lane(row.row as f64, mid));
        }
    }
    Ok(lines)
}

/// Least-squares fit of `u = beta * v + theta` over `(u, v)` samples.
/// Returns `(beta, theta, center)`.
pub fn least_squares(samples: &[(f64, f64)]) -> Option<(f64, f64, [f64; 2])> {
    if samples.len() < 2 {
        return None;
    }
    let n = samples.len() as f64;
    let mu = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let mv = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let (mut svv, mut suv) = (0.0, 0.0);
    for &(u, v) in samples {
        svv += (v - mv) * (v - mv);
        suv += (v - mv) * (u - mu);
    }
    if svv <= 0.0 {
        return None;
    }
    let beta = suv / svv;
    Some((beta, mu - beta * mv, [mu, mv]))
}

/// Fits `c_star / 2` lines from the rows holding exactly `c_star` points.
pub fn fit_lines(
    profile: &ScanProfile,
    c_star: usize,
    min_samples: usize,
) -> Result<Vec<LineLandmark>, LineFitError> {
    let kind = LandmarkKind::from_class(profile.class)
        .ok_or(LineFitError::EmptyMask(profile.class))?;
    let lines = line_samples(profile, c_star)?;
    let with_fg = profile.rows_with_foreground();
    let mut out = Vec::with_capacity(lines.len());
    for (line, samples) in lines.iter().enumerate() {
        let spread = spread_of(samples);
        let degenerate = LineFitError::DegenerateFit { line, samples: samples.len(), spread };
        if samples.len() < min_samples.max(2) {
            return Err(degenerate);
        }
        let (beta, theta, center) = least_squares(samples).ok_or(degenerate)?;
        let confidence = samples.len() as f64 / with_fg.max(1) as f64;
        out.push(LineLandmark::new(kind, beta, theta, center, confidence.min(1.0)));
    }
    Ok(out)
}

fn spread_of(samples: &[(f64, f64)]) -> f64 {
    let lo = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    if samples.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Scan, modal count and fit for one class without rotation.
pub fn fit_class(
    mask: &SegMask,
    class: Class,
    params: &LineFitParams,
    bev: &BevSpec,
) -> Result<Vec<LineLandmark>, LineFitError> {
    let profile = scan(mask, class, params.interval, &RunRules::from_params(params, false), bev);
    let c_star = modal_count(&profile)?;
    fit_lines(&profile, c_star, params.min_samples)
}

/// Longitudinal parking lines: scan the parking class in a frame rotated by
/// `phi` so the lines run vertically, suppress horizontal stripes with the
/// run-length cap, then fit in the original frame.
pub fn fit_longitudinal_parking(
    mask: &SegMask,
    phi: f64,
    params: &LineFitParams,
    bev: &BevSpec,
) -> Result<Vec<LineLandmark>, LineFitError> {
    let profile = scan_rotated(mask, Class::Parking, phi, params.interval, &RunRules::from_params(params, true), bev);
    let c_star = modal_count(&profile)?;
    fit_lines(&profile, c_star, params.min_samples)
}

/// Heading of the aisle from the lane and median fits, confidence weighted;
/// zero when neither is available.
pub fn reference_angle(lines: &[LineLandmark]) -> f64 {
    let (mut w, mut acc) = (0.0, 0.0);
    for lm in lines.iter().filter(|l| matches!(l.kind, LandmarkKind::Lane | LandmarkKind::Median)) {
        w += lm.confidence;
        acc += lm.confidence * lm.phi;
    }
    if w > 0.0 {
        acc / w
    } else {
        0.0
    }
}

/// All mask-derived landmarks of one frame. Classes without a usable fit are
/// skipped; their errors are returned alongside.
pub fn fit_frame(
    mask: &SegMask,
    params: &LineFitParams,
    bev: &BevSpec,
) -> (Vec<LineLandmark>, Vec<LineFitError>) {
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for class in [Class::Lane, Class::Median] {
        match fit_class(mask, class, params, bev) {
            Ok(mut lines) => out.append(&mut lines),
            Err(e) => errors.push(e),
        }
    }
    let phi = reference_angle(&out);
    match fit_longitudinal_parking(mask, phi, params, bev) {
        Ok(mut lines) => out.append(&mut lines),
        Err(e) => errors.push(e),
    }
    (out, errors)
}
