//! Temporal consistency: per-landmark Kalman tracks over `[c_x, c_y, theta,
//! beta]` that predict with ego motion, gate by the inconsistency `sigma`,
//! and fuse accepted measurements.
//!
//! Centers and intercepts are BEV cells (`c_x` and `theta` are columns,
//! `c_y` counts cells forward of the ego row); `beta` is dimensionless.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BevSpec, GroundPose};
use crate::landmark::{LandmarkKind, LineLandmark};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("cannot compare a {track} track with a {measurement} measurement")]
    KindMismatch { track: LandmarkKind, measurement: LandmarkKind },
    #[error("invalid filter config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Weights of the center, intercept and slope terms of `sigma`.
    pub lambda: [f64; 3],
    pub sigma_max: f64,
    pub process_noise: [f64; 4],
    pub measurement_noise: [f64; 4],
    /// Consecutive frames without an accepted measurement before a track
    /// is dropped.
    pub max_misses: u32,
    /// Largest intercept gap, cells, at which a measurement is considered
    /// for a track at all. Farther measurements start new tracks.
    pub association_radius: f64,
    /// Accepted measurements replace the state instead of being fused.
    pub gate_only: bool,
    /// Track vehicle boundaries like the painted lines. Off by default: a
    /// boundary follows whichever parked vehicle is laterally nearest, so
    /// it legitimately jumps when that vehicle changes.
    pub filter_boundary: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            lambda: [1.0, 1.0, 1.0],
            sigma_max: 10.0,
            process_noise: [0.5, 0.5, 0.5, 0.005],
            measurement_noise: [1.0, 1.0, 1.0, 0.01],
            max_misses: 10,
            association_radius: 40.0,
            gate_only: false,
            filter_boundary: false,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        let bad = |m: &str| Err(FilterError::InvalidConfig(m.to_string()));
        if self.lambda.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad("lambda weights must be finite and nonnegative");
        }
        if !(self.sigma_max > 0.0) {
            return bad("sigma_max must be positive");
        }
        if self.process_noise.iter().chain(&self.measurement_noise).any(|n| !(*n > 0.0 && n.is_finite())) {
            return bad("noise diagonals must be positive");
        }
        if !(self.association_radius > 0.0) {
            return bad("association_radius must be positive");
        }
        if self.max_misses == 0 {
            return bad("max_misses must be at least 1");
        }
        Ok(())
    }

    fn q(&self) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::from(self.process_noise))
    }

    fn r(&self) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::from(self.measurement_noise))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub id: u64,
    pub kind: LandmarkKind,
    /// `[c_x, c_y, theta, beta]`.
    pub state: Vector4<f64>,
    pub covariance: Matrix4<f64>,
    /// Frames since the track was started, counting the first.
    pub age: u32,
    /// Accepted measurements, counting the one that started the track.
    pub hits: u32,
    pub misses: u32,
    pub confidence: f64,
}

impl TrackState {
    pub fn from_measurement(id: u64, meas: &LineLandmark, cfg: &FilterConfig) -> Self {
        Self {
            id,
            kind: meas.kind,
            state: measurement_vector(meas),
            covariance: cfg.r(),
            age: 1,
            hits: 1,
            misses: 0,
            confidence: meas.confidence,
        }
    }

    pub fn landmark(&self) -> LineLandmark {
        let s = &self.state;
        LineLandmark::new(self.kind, s[3], s[2], [s[0], s[1]], self.confidence.clamp(0.0, 1.0))
    }
}

pub fn measurement_vector(lm: &LineLandmark) -> Vector4<f64> {
    Vector4::new(lm.center[0], lm.center[1], lm.theta, lm.beta)
}

/// Re-expresses a state in the next ego frame, given the ego pose change
/// `delta` measured in the previous frame, and the Jacobian of that map.
pub fn transform_state(s: &Vector4<f64>, delta: &GroundPose, bev: &BevSpec) -> (Vector4<f64>, Matrix4<f64>) {
    let (sn, cs) = delta.yaw.sin_cos();
    let (tx, ty) = (delta.x / bev.scale, delta.y / bev.scale);
    let rot = Matrix2::new(cs, sn, -sn, cs);

    let c = rot * Vector2::new(s[0] - bev.origin_col - tx, s[1] - ty);
    let (theta, beta) = (s[2] - bev.origin_col, s[3]);
    let den = cs - sn * beta;
    let beta_n = (cs * beta + sn) / den;
    let p = rot * Vector2::new(theta - tx, -ty);
    let theta_n = p[0] - beta_n * p[1];

    let dbeta = 1.0 / (den * den);
    let mut j = Matrix4::zeros();
    j.fixed_view_mut::<2, 2>(0, 0).copy_from(&rot);
    j[(2, 2)] = cs + sn * beta_n;
    j[(2, 3)] = -p[1] * dbeta;
    j[(3, 3)] = dbeta;
    (Vector4::new(c[0] + bev.origin_col, c[1], theta_n + bev.origin_col, beta_n), j)
}

/// Motion-compensated prediction with covariance `J P J^T + Q`.
pub fn predict(track: &TrackState, delta: &GroundPose, cfg: &FilterConfig, bev: &BevSpec) -> TrackState {
    let (state, j) = transform_state(&track.state, delta, bev);
    let p = j * track.covariance * j.transpose() + cfg.q();
    TrackState { state, covariance: symmetrize(&p), age: track.age + 1, ..track.clone() }
}

/// `lambda1 * |c - c~| + lambda2 * |theta - theta~| + lambda3 * |beta - beta~|`.
pub fn inconsistency(pred: &TrackState, meas: &LineLandmark, cfg: &FilterConfig) -> Result<f64, FilterError> {
    if pred.kind != meas.kind {
        return Err(FilterError::KindMismatch { track: pred.kind, measurement: meas.kind });
    }
    Ok(sigma_of(&pred.state, meas, &cfg.lambda))
}

fn sigma_of(s: &Vector4<f64>, meas: &LineLandmark, lambda: &[f64; 3]) -> f64 {
    let dc = (meas.center[0] - s[0]).hypot(meas.center[1] - s[1]);
    lambda[0] * dc + lambda[1] * (meas.theta - s[2]).abs() + lambda[2] * (meas.beta - s[3]).abs()
}

/// Slides the track center along its own line to the point nearest the
/// measured center. A line's center depends on which part of it is visible,
/// so centers are compared at the same along-line position.
pub fn align_center(track: &TrackState, meas: &LineLandmark) -> TrackState {
    let (theta, beta) = (track.state[2], track.state[3]);
    let t = ((meas.center[0] - theta) * beta + meas.center[1]) / (1.0 + beta * beta);
    let mut state = track.state;
    state[0] = theta + beta * t;
    state[1] = t;
    TrackState { state, ..track.clone() }
}

fn symmetrize(p: &Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

/// Joseph-form Kalman update with identity measurement matrix.
pub fn update(track: &TrackState, meas: &LineLandmark, cfg: &FilterConfig) -> TrackState {
    let z = measurement_vector(meas);
    let r = cfg.r();
    let (state, covariance) = if cfg.gate_only {
        (z, r)
    } else {
        let p = &track.covariance;
        let s = p + r;
        let k = p * s.try_inverse().expect("P + R is positive definite");
        let ik = Matrix4::identity() - k;
        let p = ik * p * ik.transpose() + k * r * k.transpose();
        (track.state + k * (z - track.state), symmetrize(&p))
    };
    TrackState {
        state,
        covariance,
        hits: track.hits + 1,
        misses: 0,
        confidence: meas.confidence,
        ..track.clone()
    }
}

/// What happened to one track or measurement during a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterRecord {
    pub kind: LandmarkKind,
    /// `None` for measurements passed through without a track.
    pub track: Option<u64>,
    /// `None` when the track had no measurement this frame.
    pub accepted: Option<bool>,
    pub sigma: Option<f64>,
    /// Track estimate after the step; `None` when the track was dropped.
    pub filtered: Option<LineLandmark>,
    pub raw: Option<LineLandmark>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutput {
    pub accepted: Vec<LineLandmark>,
    pub rejected: Vec<LineLandmark>,
    /// Landmarks the tracker reports for this frame.
    pub emitted: Vec<LineLandmark>,
    pub records: Vec<FilterRecord>,
}

/// One frame of predict, associate, gate and update across all kinds.
///
/// Within a kind, measurements and predicted tracks are paired greedily by
/// ascending intercept gap up to `association_radius`. A paired measurement
/// is compared with the prediction after [`align_center`], fused when
/// `sigma <= sigma_max` and rejected otherwise; rejected measurements never
/// start tracks. Unpaired measurements start tracks. Boundaries pass
/// through untouched unless `filter_boundary` is set.
/// A track is dropped after `max_misses` frames without an accepted
/// measurement, or at its first miss if it has only its initial hit.
pub fn step(
    tracks: &[TrackState],
    detections: &[LineLandmark],
    ego_delta: &GroundPose,
    cfg: &FilterConfig,
    bev: &BevSpec,
    next_id: &mut u64,
) -> (Vec<TrackState>, StepOutput) {
    let predicted: Vec<TrackState> = tracks.iter().map(|t| predict(t, ego_delta, cfg, bev)).collect();
    let mut out = StepOutput::default();
    let mut next_tracks = Vec::new();

    for kind in LandmarkKind::ALL {
        let ti: Vec<usize> = (0..predicted.len()).filter(|&i| predicted[i].kind == kind).collect();
        let di: Vec<usize> = (0..detections.len()).filter(|&j| detections[j].kind == kind).collect();
        if kind == LandmarkKind::Boundary && !cfg.filter_boundary {
            for &j in &di {
                let meas = detections[j];
                out.accepted.push(meas);
                out.emitted.push(meas);
                out.records.push(FilterRecord {
                    kind,
                    track: None,
                    accepted: Some(true),
                    sigma: None,
                    filtered: Some(meas),
                    raw: Some(meas),
                });
            }
            continue;
        }
        let mut pairs = Vec::new();
        for &i in &ti {
            for &j in &di {
                let gap = (predicted[i].state[2] - detections[j].theta).abs();
                if gap <= cfg.association_radius {
                    pairs.push((gap, i, j));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut track_meas: Vec<Option<usize>> = vec![None; predicted.len()];
        let mut det_used = vec![false; detections.len()];
        for (_, i, j) in pairs {
            if track_meas[i].is_none() && !det_used[j] {
                track_meas[i] = Some(j);
                det_used[j] = true;
            }
        }

        for &i in &ti {
            let pred = &predicted[i];
            let (next, rec) = match track_meas[i] {
                Some(j) => {
                    let meas = &detections[j];
                    let aligned = align_center(pred, meas);
                    let sigma = sigma_of(&aligned.state, meas, &cfg.lambda);
                    if sigma <= cfg.sigma_max {
                        out.accepted.push(*meas);
                        (update(&aligned, meas, cfg), (Some(true), Some(sigma), Some(*meas)))
                    } else {
                        out.rejected.push(*meas);
                        (TrackState { misses: pred.misses + 1, ..pred.clone() }, (Some(false), Some(sigma), Some(*meas)))
                    }
                }
                None => (TrackState { misses: pred.misses + 1, ..pred.clone() }, (None, None, None)),
            };
            let keep = next.misses < cfg.max_misses && !(next.misses > 0 && next.hits < 2);
            out.records.push(FilterRecord {
                kind,
                track: Some(next.id),
                accepted: rec.0,
                sigma: rec.1,
                filtered: keep.then(|| next.landmark()),
                raw: rec.2,
            });
            if keep {
                out.emitted.push(next.landmark());
                next_tracks.push(next);
            }
        }

        for &j in di.iter().filter(|&&j| !det_used[j]) {
            let meas = &detections[j];
            let track = TrackState::from_measurement(*next_id, meas, cfg);
            *next_id += 1;
            out.accepted.push(*meas);
            out.emitted.push(track.landmark());
            out.records.push(FilterRecord {
                kind,
                track: Some(track.id),
                accepted: Some(true),
                sigma: None,
                filtered: Some(track.landmark()),
                raw: Some(*meas),
            });
            next_tracks.push(track);
        }
    }
    (next_tracks, out)
}

/// Owns the tracks of a sequence and applies [`step`] frame by frame.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub cfg: FilterConfig,
    pub bev: BevSpec,
    tracks: Vec<TrackState>,
    next_id: u64,
}

impl Tracker {
    pub fn new(cfg: FilterConfig, bev: BevSpec) -> Result<Self, FilterError> {
        cfg.validate()?;
        Ok(Self { cfg, bev, tracks: Vec::new(), next_id: 0 })
    }

    pub fn tracks(&self) -> &[TrackState] {
        &self.tracks
    }

    pub fn step(&mut self, detections: &[LineLandmark], ego_delta: &GroundPose) -> StepOutput {
        let (tracks, out) = step(&self.tracks, detections, ego_delta, &self.cfg, &self.bev, &mut self.next_id);
        self.tracks = tracks;
        out
    }
}
