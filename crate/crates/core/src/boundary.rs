//! Stationary-vehicle boundary lines.
//!
//! The bottom-edge midpoint of each vehicle detection box touches the ground,
//! so the camera homography back-projects it to a metric keypoint. Keypoints
//! from different cameras that land within 25 cm of each other are the same
//! vehicle and get merged. Per side of the ego vehicle, the boundary is the
//! line parallel to the heading through the laterally closest keypoint.

use serde::{Deserialize, Serialize};

use crate::geometry::{BevSpec, CameraId, CameraRig, CameraSet, GroundPoint, ImagePoint};
use crate::landmark::{LandmarkKind, LineLandmark};

/// Keypoints from distinct cameras closer than this (meters) are merged.
pub const ASSOCIATION_RADIUS: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionBox {
    pub camera: CameraId,
    /// Top-left corner, pixels.
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

impl DetectionBox {
    /// Midpoint of the bottom edge.
    pub fn keypoint_pixel(&self) -> ImagePoint {
        ImagePoint::new(self.u + self.w / 2.0, self.v + self.h)
    }

    pub fn is_valid(&self, width: u32, height: u32) -> bool {
        self.w > 0.0
            && self.h > 0.0
            && self.u >= 0.0
            && self.v >= 0.0
            && self.u + self.w <= width as f64
            && self.v + self.h <= height as f64
            && (0.0..=1.0).contains(&self.score)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleKeypoint {
    pub cameras: CameraSet,
    pub ground: GroundPoint,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryLine {
    pub side: Side,
    /// Signed lateral offset, meters.
    pub offset: f64,
    pub support: Vec<GroundPoint>,
}

impl BoundaryLine {
    /// Landmark form: `beta = 0`, `theta` the boundary column, center on the
    /// ego row.
    pub fn to_landmark(&self, bev: &BevSpec) -> LineLandmark {
        let theta = bev.origin_col + self.offset / bev.scale;
        LineLandmark::new(LandmarkKind::Boundary, 0.0, theta, [theta, 0.0], 1.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KeypointDiagnostics {
    pub invalid_boxes: usize,
    pub out_of_area: usize,
}

/// Back-projects the bottom-edge midpoint of each box through its camera.
/// Invalid boxes and points that fail IPM are dropped and counted.
pub fn keypoints_from_boxes(
    dets: &[DetectionBox],
    rig: &CameraRig,
) -> (Vec<VehicleKeypoint>, KeypointDiagnostics) {
    let mut diag = KeypointDiagnostics::default();
    let mut out = Vec::with_capacity(dets.len());
    for d in dets {
        let cam = rig.camera(d.camera);
        if !d.is_valid(cam.width, cam.height) {
            diag.invalid_boxes += 1;
            continue;
        }
        match rig.ipm(d.camera, d.keypoint_pixel()) {
            Ok(ground) => out.push(VehicleKeypoint {
                cameras: CameraSet::single(d.camera),
                ground,
                score: d.score,
            }),
            Err(_) => diag.out_of_area += 1,
        }
    }
    (out, diag)
}

/// Greedy cross-camera merging: repeatedly merge the closest pair with
/// disjoint camera sets while its distance is below 25 cm. The merged point
/// is the score-weighted centroid; its score is the larger of the two.
pub fn associate_multiview(kps: &[VehicleKeypoint]) -> Vec<VehicleKeypoint> {
    // (keypoint, accumulated weight)
    let mut clusters: Vec<(VehicleKeypoint, f64)> =
        kps.iter().map(|k| (*k, k.score.max(1e-12))).collect();
    // Canonical order makes tie-breaking independent of input order.
    clusters.sort_by(|a, b| {
        a.0.ground
            .x
            .total_cmp(&b.0.ground.x)
            .then(a.0.ground.y.total_cmp(&b.0.ground.y))
            .then(a.0.cameras.cmp(&b.0.cameras))
            .then(a.0.score.total_cmp(&b.0.score))
    });

    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let (a, b) = (&clusters[i].0, &clusters[j].0);
                if !a.cameras.is_disjoint(b.cameras) {
                    continue;
                }
                let d = a.ground.distance(&b.ground);
                if d < ASSOCIATION_RADIUS && best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        let (b, wb) = clusters.remove(j);
        let (a, wa) = clusters[i];
        let w = wa + wb;
        clusters[i] = (
            VehicleKeypoint {
                cameras: a.cameras.union(b.cameras),
                ground: GroundPoint::new(
                    (a.ground.x * wa + b.ground.x * wb) / w,
                    (a.ground.y * wa + b.ground.y * wb) / w,
                ),
                score: a.score.max(b.score),
            },
            w,
        );
    }
    clusters.into_iter().map(|(k, _)| k).collect()
}

/// Per side, the line `x = x_b` through the laterally closest keypoint.
pub fn fit_boundary(kps: &[VehicleKeypoint]) -> Vec<BoundaryLine> {
    let mut out = Vec::new();
    for side in [Side::Left, Side::Right] {
        let support: Vec<GroundPoint> = kps
            .iter()
            .map(|k| k.ground)
            .filter(|g| g.x * side.sign() > 0.0)
            .collect();
        if support.is_empty() {
            continue;
        }
        let nearest = support.iter().map(|g| g.x.abs()).fold(f64::INFINITY, f64::min);
        out.push(BoundaryLine { side, offset: nearest * side.sign(), support });
    }
    out
}

/// Boxes to boundary landmarks for one frame.
pub fn boundary_landmarks(dets: &[DetectionBox], rig: &CameraRig) -> Vec<LineLandmark> {
    let (kps, _) = keypoints_from_boxes(dets, rig);
    let merged = associate_multiview(&kps);
    fit_boundary(&merged).iter().map(|b| b.to_landmark(&rig.bev)).collect()
}
