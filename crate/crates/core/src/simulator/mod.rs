//! Synthetic parking-lot scenes and the observations a perception front-end
//! would produce for them: noisy BEV segmentation masks and per-camera
//! vehicle boxes.
//!
//! Scenes are laid out in an "aisle" frame (`a` lateral, `b` along the
//! aisle) and placed in the world by a template angle. The ego trajectory is
//! a list of world poses of the front camera.

mod dataset;
mod detect;
mod noise;
mod render;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GroundPoint, GroundPose};
use crate::mask::{Class, MaskError};

pub use dataset::{
    export_sequence, load_dataset, sha256_hex, Dataset, DatasetError, DatasetManifest, FileEntry, PoseRecord,
    DETECTIONS_FILE, MANIFEST_FILE, OUTLIERS_FILE, POSES_FILE, RIG_FILE, TRUTH_FILE,
};
pub use detect::{
    boundary_truth, near_side, vehicle_detections, VehicleView, DETECTION_RANGE, EGO_CENTER,
};
pub use noise::{NoiseSpec, Outlier};
pub use render::{
    frame_stripes, frame_truth, point_label, render_bev, render_camera_masks, render_frame,
    FrameObservation, Stripe, StripeIndex,
};

pub const DEFAULT_FRAMES: usize = 400;
/// Seconds between frames.
pub const FRAME_PERIOD: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown scene template '{0}' (known: straight_aisle, rotated_aisle, static_aisle)")]
    UnknownTemplate(String),
    #[error("frame {frame} out of range for a {frames}-frame trajectory")]
    FrameOutOfRange { frame: usize, frames: usize },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid noise spec: {0}")]
    InvalidNoise(String),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneTemplate {
    /// Aisle aligned with the ego heading, ego weaving slowly forward.
    StraightAisle,
    /// Aisle at 10 degrees to the ego heading, ego crabbing along it.
    RotatedAisle,
    /// Straight aisle with a parked ego.
    StaticAisle,
}

impl SceneTemplate {
    pub const ALL: [SceneTemplate; 3] =
        [SceneTemplate::StraightAisle, SceneTemplate::RotatedAisle, SceneTemplate::StaticAisle];

    pub fn as_str(self) -> &'static str {
        match self {
            SceneTemplate::StraightAisle => "straight_aisle",
            SceneTemplate::RotatedAisle => "rotated_aisle",
            SceneTemplate::StaticAisle => "static_aisle",
        }
    }
}

impl fmt::Display for SceneTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SceneTemplate {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SceneTemplate::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| SimError::UnknownTemplate(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrueLineKind {
    Lane,
    ParkingLongitudinal,
    ParkingHorizontal,
    Median,
}

impl TrueLineKind {
    pub fn class(self) -> Class {
        match self {
            TrueLineKind::Lane => Class::Lane,
            TrueLineKind::ParkingLongitudinal | TrueLineKind::ParkingHorizontal => Class::Parking,
            TrueLineKind::Median => Class::Median,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dash {
    pub on: f64,
    pub off: f64,
    /// Offset of the first dash start from the segment start, meters.
    pub phase: f64,
}

/// A painted stripe along the world segment `start -> end`.
///
/// Lines are stored in world coordinates; their BEV slope and intercept
/// depend on the ego pose and come from [`TrueLine::bev_params`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueLine {
    pub kind: TrueLineKind,
    pub start: GroundPoint,
    pub end: GroundPoint,
    /// Stripe width, meters.
    pub width: f64,
    pub dash: Option<Dash>,
}

impl TrueLine {
    pub fn length(&self) -> f64 {
        self.start.distance(&self.end)
    }

    /// Painted sub-segments as distances from `start`.
    pub fn pieces(&self) -> Vec<(f64, f64)> {
        let len = self.length();
        let Some(d) = self.dash else { return vec![(0.0, len)] };
        let period = d.on + d.off;
        let mut out = Vec::new();
        let mut s = d.phase.rem_euclid(period) - period;
        while s < len {
            let (a, b) = (s.max(0.0), (s + d.on).min(len));
            if b > a {
                out.push((a, b));
            }
            s += period;
        }
        out
    }

    /// `(beta, theta)` of the centerline in BEV cells for an ego at `pose`,
    /// or `None` when the line runs closer to lateral than longitudinal.
    pub fn bev_params(&self, pose: &GroundPose, bev: &crate::geometry::BevSpec) -> Option<(f64, f64)> {
        let (u0, v0) = bev.ground_to_lane(pose.world_to_local(self.start));
        let (u1, v1) = bev.ground_to_lane(pose.world_to_local(self.end));
        if (v1 - v0).abs() <= (u1 - u0).abs() {
            return None;
        }
        let beta = (u1 - u0) / (v1 - v0);
        Some((beta, u0 - beta * v0))
    }
}

/// Parked vehicle footprint; `heading` uses the pose yaw convention and
/// `length` runs along it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueVehicle {
    pub center: GroundPoint,
    pub length: f64,
    pub width: f64,
    pub heading: f64,
}

impl TrueVehicle {
    /// World corners in order around the rectangle.
    pub fn corners(&self) -> [GroundPoint; 4] {
        let pose = GroundPose::new(self.center.x, self.center.y, self.heading);
        let (hw, hl) = (self.width / 2.0, self.length / 2.0);
        [(-hw, -hl), (hw, -hl), (hw, hl), (-hw, hl)]
            .map(|(x, y)| pose.local_to_world(GroundPoint::new(x, y)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub pose: GroundPose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub template: SceneTemplate,
    pub seed: u64,
    pub lines: Vec<TrueLine>,
    pub vehicles: Vec<TrueVehicle>,
    pub trajectory: Vec<TrajectoryPoint>,
}

impl SceneTruth {
    pub fn frames(&self) -> usize {
        self.trajectory.len()
    }

    pub fn pose(&self, frame: usize) -> Result<GroundPose, SimError> {
        self.trajectory
            .get(frame)
            .map(|p| p.pose)
            .ok_or(SimError::FrameOutOfRange { frame, frames: self.frames() })
    }

    /// Ego motion from the previous frame, in the previous frame's ego
    /// coordinates; zero on frame 0.
    pub fn ego_delta(&self, frame: usize) -> Result<GroundPose, SimError> {
        let cur = self.pose(frame)?;
        if frame == 0 {
            return Ok(GroundPose::default());
        }
        Ok(self.pose(frame - 1)?.delta_to(&cur))
    }

    pub fn count(&self, kind: TrueLineKind) -> usize {
        self.lines.iter().filter(|l| l.kind == kind).count()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScene(m));
        for (i, l) in self.lines.iter().enumerate() {
            if !(l.width > 0.0) || !l.start.is_finite() || !l.end.is_finite() || !(l.length() > 0.0) {
                return bad(format!("line {i} is degenerate"));
            }
            if let Some(d) = l.dash {
                if !(d.on > 0.0 && d.off >= 0.0 && d.phase.is_finite()) {
                    return bad(format!("line {i} has an invalid dash pattern"));
                }
            }
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            if !(v.length > 0.0 && v.width > 0.0) || !v.center.is_finite() || !v.heading.is_finite() {
                return bad(format!("vehicle {i} is degenerate"));
            }
        }
        for w in self.trajectory.windows(2) {
            if !(w[1].t > w[0].t) {
                return bad("trajectory timestamps must increase strictly".into());
            }
        }
        if self.trajectory.iter().any(|p| !p.pose.is_finite() || !p.t.is_finite()) {
            return bad("trajectory contains non-finite poses".into());
        }
        Ok(())
    }
}

/// Aisle layout in aisle coordinates.
struct Layout {
    angle: f64,
    median: f64,
    lane: f64,
    inner: f64,
    outer: f64,
    vehicle_length: f64,
    vehicle_width: f64,
    speed: f64,
    weave: f64,
}

const AISLE_START: f64 = -20.0;
const AISLE_END: f64 = 44.0;
const SLOT_LENGTH: f64 = 6.0;
const WEAVE_PERIOD: f64 = 240.0;

impl SceneTemplate {
    fn layout(self) -> Layout {
        match self {
            SceneTemplate::StraightAisle | SceneTemplate::StaticAisle => Layout {
                angle: 0.0,
                median: -0.6,
                lane: 0.9,
                inner: 2.2,
                outer: 4.3,
                vehicle_length: 4.6,
                vehicle_width: 1.8,
                speed: if self == SceneTemplate::StaticAisle { 0.0 } else { 0.05 },
                weave: if self == SceneTemplate::StaticAisle { 0.0 } else { 0.15 },
            },
            SceneTemplate::RotatedAisle => Layout {
                angle: (-10.0f64).to_radians(),
                median: -0.6,
                lane: 0.9,
                inner: 1.9,
                outer: 3.5,
                vehicle_length: 4.0,
                vehicle_width: 1.3,
                speed: 0.05,
                weave: 0.0,
            },
        }
    }

    /// Builds a scene with a `frames`-long trajectory.
    pub fn build(self, seed: u64, frames: usize) -> SceneTruth {
        let lay = self.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0, 0x5ce7e));
        let aisle = GroundPose::new(0.0, 0.0, lay.angle);
        let at = |a: f64, b: f64| aisle.local_to_world(GroundPoint::new(a, b));
        let longitudinal = |kind, a: f64, width, dash| TrueLine {
            kind,
            start: at(a, AISLE_START),
            end: at(a, AISLE_END),
            width,
            dash,
        };

        // Small per-seed offsets keep stripe edges off the cell grid.
        let mut jitter = |r: f64| rng.random_range(-r..r);
        let shift = jitter(0.5);
        let mut lines = vec![
            longitudinal(TrueLineKind::Median, lay.median + jitter(0.013), 0.20, None),
            longitudinal(
                TrueLineKind::Lane,
                lay.lane + jitter(0.013),
                0.15,
                Some(Dash { on: 2.0, off: 2.0, phase: 2.0 + jitter(2.0) }),
            ),
        ];
        for side in [-1.0, 1.0] {
            for a in [lay.inner, lay.outer] {
                lines.push(longitudinal(TrueLineKind::ParkingLongitudinal, side * a + jitter(0.013), 0.12, None));
            }
        }
        let slots = ((AISLE_END - AISLE_START) / SLOT_LENGTH) as usize;
        for side in [-1.0, 1.0] {
            for k in 1..slots {
                let b = AISLE_START + k as f64 * SLOT_LENGTH + shift;
                lines.push(TrueLine {
                    kind: TrueLineKind::ParkingHorizontal,
                    start: at(side * lay.inner, b),
                    end: at(side * lay.outer, b),
                    width: 0.12,
                    dash: None,
                });
            }
        }

        let mut vehicles = Vec::new();
        let mid = (lay.inner + lay.outer) / 2.0;
        for side in [-1.0, 1.0] {
            for k in 0..slots {
                let a = side * mid + jitter(0.02);
                let b = AISLE_START + (k as f64 + 0.5) * SLOT_LENGTH + shift + jitter(0.3);
                vehicles.push(TrueVehicle {
                    center: at(a, b),
                    length: lay.vehicle_length,
                    width: lay.vehicle_width,
                    heading: lay.angle + jitter(0.005),
                });
            }
        }

        let trajectory = (0..frames)
            .map(|k| {
                let b = lay.speed * k as f64;
                let phase = 2.0 * std::f64::consts::PI * k as f64 / WEAVE_PERIOD;
                let a = lay.weave * phase.sin();
                // Heading follows the weave: d(a)/d(b) along the aisle.
                let slope = if lay.speed > 0.0 {
                    lay.weave * phase.cos() * 2.0 * std::f64::consts::PI / (WEAVE_PERIOD * lay.speed)
                } else {
                    0.0
                };
                let p = at(a, b);
                let yaw = if self == SceneTemplate::RotatedAisle { 0.0 } else { lay.angle - slope.atan() };
                TrajectoryPoint { t: FRAME_PERIOD * k as f64, pose: GroundPose::new(p.x, p.y, yaw) }
            })
            .collect();

        SceneTruth { template: self, seed, lines, vehicles, trajectory }
    }
}

/// Scene for `(seed, template)` with the default 400-frame trajectory.
pub fn generate_scene(seed: u64, template: &str) -> Result<SceneTruth, SimError> {
    Ok(template.parse::<SceneTemplate>()?.build(seed, DEFAULT_FRAMES))
}

/// Stream-separated seed for per-frame random draws.
pub(crate) fn mix_seed(seed: u64, frame: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(frame.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(stream.wrapping_mul(0xd1b5_4a32_d192_ed03));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
