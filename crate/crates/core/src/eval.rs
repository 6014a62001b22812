//! Scoring: false/missed detection rates per landmark kind, per-frame
//! intercept and slope errors, stage timing, and an SVG plot of error
//! curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BevSpec;
use crate::landmark::{LandmarkKind, LineLandmark};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("predictions cover {preds} frames but truth covers {truth}")]
    FrameMisalignment { preds: usize, truth: usize },
    #[error("invalid match spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchSpec {
    /// Largest intercept error of a correct detection, cells.
    pub theta_tol: f64,
    pub beta_tol: f64,
    /// Largest lateral error of a correct boundary line, meters.
    pub boundary_tol: f64,
}

impl Default for MatchSpec {
    fn default() -> Self {
        Self { theta_tol: 5.0, beta_tol: 0.05, boundary_tol: 0.15 }
    }
}

impl MatchSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if [self.theta_tol, self.beta_tol, self.boundary_tol].iter().all(|t| *t > 0.0 && t.is_finite()) {
            Ok(())
        } else {
            Err(EvalError::InvalidSpec("tolerances must be positive and finite".into()))
        }
    }

    fn accepts(&self, kind: LandmarkKind, p: &LineLandmark, t: &LineLandmark, bev: &BevSpec) -> bool {
        let dtheta = (p.theta - t.theta).abs();
        match kind {
            LandmarkKind::Boundary => dtheta * bev.scale <= self.boundary_tol,
            _ => dtheta <= self.theta_tol && (p.beta - t.beta).abs() <= self.beta_tol,
        }
    }
}

/// `1 - md - fd`.
pub fn accuracy(md: f64, fd: f64) -> f64 {
    1.0 - md - fd
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KindMetrics {
    pub predictions: usize,
    pub truths: usize,
    pub matched: usize,
    pub fd: f64,
    pub md: f64,
    pub accuracy: f64,
    /// Mean absolute intercept error over matched pairs, cells.
    pub mean_dc0: f64,
    /// Mean absolute slope error over matched pairs.
    pub mean_dc1: f64,
}

/// Matched-pair errors of one frame and kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameError {
    pub frame: usize,
    pub kind: LandmarkKind,
    pub matched: usize,
    pub dc0: f64,
    pub dc1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub frames: usize,
    pub kinds: BTreeMap<LandmarkKind, KindMetrics>,
    pub per_frame: Vec<FrameError>,
}

fn canonical(lms: &[LineLandmark], kind: LandmarkKind) -> Vec<LineLandmark> {
    let mut v: Vec<LineLandmark> = lms.iter().filter(|l| l.kind == kind).copied().collect();
    v.sort_by(|a, b| {
        a.theta
            .total_cmp(&b.theta)
            .then(a.beta.total_cmp(&b.beta))
            .then(a.center[0].total_cmp(&b.center[0]))
            .then(a.center[1].total_cmp(&b.center[1]))
            .then(a.confidence.total_cmp(&b.confidence))
    });
    v
}

/// One-to-one greedy matching by ascending intercept gap, restricted to
/// pairs within tolerance. Returns `(prediction, truth)` index pairs into
/// the kind-filtered, canonically sorted lists.
pub fn match_frame(
    preds: &[LineLandmark],
    truth: &[LineLandmark],
    kind: LandmarkKind,
    spec: &MatchSpec,
    bev: &BevSpec,
) -> (Vec<LineLandmark>, Vec<LineLandmark>, Vec<(usize, usize)>) {
    let p = canonical(preds, kind);
    let t = canonical(truth, kind);
    let mut pairs = Vec::new();
    for (i, a) in p.iter().enumerate() {
        for (j, b) in t.iter().enumerate() {
            if spec.accepts(kind, a, b, bev) {
                pairs.push(((a.theta - b.theta).abs(), i, j));
            }
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let (mut pu, mut tu) = (vec![false; p.len()], vec![false; t.len()]);
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !pu[i] && !tu[j] {
            pu[i] = true;
            tu[j] = true;
            out.push((i, j));
        }
    }
    (p, t, out)
}

pub fn match_and_score(
    preds: &[Vec<LineLandmark>],
    truth: &[Vec<LineLandmark>],
    spec: &MatchSpec,
    bev: &BevSpec,
) -> Result<Metrics, EvalError> {
    spec.validate()?;
    if preds.len() != truth.len() {
        return Err(EvalError::FrameMisalignment { preds: preds.len(), truth: truth.len() });
    }
    let mut metrics = Metrics { frames: preds.len(), ..Metrics::default() };
    let mut sums: BTreeMap<LandmarkKind, (f64, f64)> = BTreeMap::new();
    for (frame, (fp, ft)) in preds.iter().zip(truth).enumerate() {
        for kind in LandmarkKind::ALL {
            let (p, t, pairs) = match_frame(fp, ft, kind, spec, bev);
            let km = metrics.kinds.entry(kind).or_default();
            km.predictions += p.len();
            km.truths += t.len();
            km.matched += pairs.len();
            if pairs.is_empty() {
                continue;
            }
            let n = pairs.len() as f64;
            let dc0 = pairs.iter().map(|&(i, j)| (p[i].theta - t[j].theta).abs()).sum::<f64>();
            let dc1 = pairs.iter().map(|&(i, j)| (p[i].beta - t[j].beta).abs()).sum::<f64>();
            let s = sums.entry(kind).or_default();
            s.0 += dc0;
            s.1 += dc1;
            metrics.per_frame.push(FrameError { frame, kind, matched: pairs.len(), dc0: dc0 / n, dc1: dc1 / n });
        }
    }
    for (kind, km) in metrics.kinds.iter_mut() {
        km.fd = rate(km.predictions - km.matched, km.predictions);
        km.md = rate(km.truths - km.matched, km.truths);
        km.accuracy = accuracy(km.md, km.fd);
        if km.matched > 0 {
            let s = sums[kind];
            km.mean_dc0 = s.0 / km.matched as f64;
            km.mean_dc1 = s.1 / km.matched as f64;
        }
    }
    Ok(metrics)
}

fn rate(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per frame, the mean absolute intercept and slope error of each truth
/// landmark of `kind` against its nearest prediction (by intercept), with
/// no tolerance. `None` on frames without a truth or prediction.
pub fn error_series(
    preds: &[Vec<LineLandmark>],
    truth: &[Vec<LineLandmark>],
    kind: LandmarkKind,
) -> Vec<Option<(f64, f64)>> {
    preds
        .iter()
        .zip(truth)
        .map(|(fp, ft)| {
            let p = canonical(fp, kind);
            let t = canonical(ft, kind);
            if p.is_empty() || t.is_empty() {
                return None;
            }
            let (mut e0, mut e1) = (0.0, 0.0);
            for tl in &t {
                let near = p
                    .iter()
                    .min_by(|a, b| (a.theta - tl.theta).abs().total_cmp(&(b.theta - tl.theta).abs()))
                    .expect("non-empty");
                e0 += (near.theta - tl.theta).abs();
                e1 += (near.beta - tl.beta).abs();
            }
            let n = t.len() as f64;
            Some((e0 / n, e1 / n))
        })
        .collect()
}

/// Maximum and population variance of the present values.
pub fn series_stats(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (v.iter().copied().fold(f64::NEG_INFINITY, f64::max), var)
}

pub const STAGES: [&str; 6] = ["ingest", "warp", "linefit", "boundary", "filter", "emit"];

/// Per-frame stage durations in milliseconds, in [`STAGES`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes(pub [f64; 6]);

impl StageTimes {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub mean_ms: f64,
    pub p95_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub frames: usize,
    pub stages: BTreeMap<String, StageSummary>,
    pub total: StageSummary,
}

fn summarize(mut v: Vec<f64>) -> StageSummary {
    if v.is_empty() {
        return StageSummary { mean_ms: 0.0, p95_ms: 0.0 };
    }
    v.sort_by(f64::total_cmp);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    // Nearest-rank percentile.
    let rank = ((0.95 * v.len() as f64).ceil() as usize).clamp(1, v.len());
    StageSummary { mean_ms: mean, p95_ms: v[rank - 1] }
}

pub fn timing_report(frames: &[StageTimes]) -> TimingReport {
    let stages = STAGES
        .iter()
        .enumerate()
        .map(|(k, name)| (name.to_string(), summarize(frames.iter().map(|f| f.0[k]).collect())))
        .collect();
    TimingReport { frames: frames.len(), stages, total: summarize(frames.iter().map(StageTimes::total).collect()) }
}

/// Metrics as CSV: one row per kind.
pub fn metrics_csv(m: &Metrics) -> String {
    let mut s = String::from("kind,predictions,truths,matched,fd,md,accuracy,mean_dc0,mean_dc1\n");
    for (kind, k) in &m.kinds {
        let _ = writeln!(
            s,
            "{kind},{},{},{},{},{},{},{},{}",
            k.predictions, k.truths, k.matched, k.fd, k.md, k.accuracy, k.mean_dc0, k.mean_dc1
        );
    }
    s
}

/// Two stacked panels (intercept error, slope error), one polyline per
/// series. Missing frames break the line.
pub fn error_curves_svg(series: &[(&str, &[Option<(f64, f64)>])]) -> String {
    const W: f64 = 800.0;
    const PANEL: f64 = 220.0;
    const PAD: f64 = 50.0;
    const COLORS: [&str; 4] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd"];
    let frames = series.iter().map(|(_, s)| s.len()).max().unwrap_or(0).max(2);
    let mut out = String::new();
    let height = 2.0 * PANEL + 3.0 * PAD;
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" viewBox="0 0 {W} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (panel, title) in ["intercept error dC0 (cells)", "slope error dC1"].iter().enumerate() {
        let top = PAD + panel as f64 * (PANEL + PAD);
        let ymax = series
            .iter()
            .flat_map(|(_, s)| s.iter().flatten().map(|e| if panel == 0 { e.0 } else { e.1 }))
            .fold(0.0f64, f64::max)
            .max(1e-9);
        let x = |f: usize| PAD + (W - 2.0 * PAD) * f as f64 / (frames - 1) as f64;
        let y = |e: f64| top + PANEL - PANEL * e / ymax;
        let _ = writeln!(
            out,
            r#"<rect x="{PAD}" y="{top}" width="{}" height="{PANEL}" fill="none" stroke="black"/>"#,
            W - 2.0 * PAD
        );
        let _ = writeln!(out, r#"<text x="{PAD}" y="{}">{title}</text>"#, top - 8.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{ymax:.4}</text>"#, PAD - 4.0, top + 10.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">0</text>"#, PAD - 4.0, top + PANEL);
        for (k, (_, s)) in series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let mut run: Vec<String> = Vec::new();
            let flush = |run: &mut Vec<String>, out: &mut String| {
                if run.len() > 1 {
                    let _ = writeln!(
                        out,
                        r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
                        run.join(" ")
                    );
                }
                run.clear();
            };
            for (f, e) in s.iter().enumerate() {
                match e {
                    Some(e) => {
                        let v = if panel == 0 { e.0 } else { e.1 };
                        run.push(format!("{:.2},{:.2}", x(f), y(v)));
                    }
                    None => flush(&mut run, &mut out),
                }
            }
            flush(&mut run, &mut out);
        }
    }
    for (k, (name, _)) in series.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{}">{name}</text>"#,
            W - PAD - 150.0,
            PAD + 16.0 * (k as f64 + 1.0),
            COLORS[k % COLORS.len()]
        );
    }
    out.push_str("</svg>\n");
    out
}
