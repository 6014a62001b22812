use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::noise::NoiseSpec;
use super::{mix_seed, SceneTruth, SimError, TrueVehicle};
use crate::boundary::{DetectionBox, Side};
use crate::geometry::{Camera, CameraId, CameraRig, GroundPoint, GroundPose, ImagePoint};

const STREAM_DETECTIONS: u64 = 6;
const STREAM_FALSE_POSITIVES: u64 = 7;

/// Center of the ego footprint in the ego frame (the origin is the front
/// camera of a 4.6 m vehicle).
pub const EGO_CENTER: GroundPoint = GroundPoint::new(0.0, -2.3);
/// Vehicles whose near-side midpoint is farther than this from the ego
/// center are not detected, meters.
pub const DETECTION_RANGE: f64 = 9.0;
const MIN_BOX_WIDTH: f64 = 8.0;
/// Box width when an end of the near side is behind the camera.
const FALLBACK_BOX_WIDTH: f64 = 400.0;
const MIN_BOX_SIDE: f64 = 2.0;

/// A vehicle whose near-side midpoint is visible in one camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleView {
    pub vehicle: usize,
    pub camera: CameraId,
    /// Near-side midpoint in the image.
    pub m: ImagePoint,
    /// Horizontal image span of the near side, before clipping.
    pub width: f64,
    /// Near-side midpoint in the ego frame.
    pub ground: GroundPoint,
}

/// Endpoints and midpoint, in the ego frame, of the footprint edge whose
/// midpoint is laterally closest to the ego.
pub fn near_side(vehicle: &TrueVehicle, pose: &GroundPose) -> (GroundPoint, GroundPoint, GroundPoint) {
    let c = vehicle.corners().map(|p| pose.world_to_local(p));
    let mut best = None;
    for i in 0..4 {
        let (a, b) = (c[i], c[(i + 1) % 4]);
        let m = GroundPoint::new((a.x + b.x) / 2.0, (a.y + b.y) / 2.0);
        if best.is_none_or(|(_, _, bm): (GroundPoint, GroundPoint, GroundPoint)| m.x.abs() < bm.x.abs()) {
            best = Some((a, b, m));
        }
    }
    best.expect("four edges")
}

/// Every (vehicle, camera) pair where the near-side midpoint is in range
/// and in view, ordered by camera then vehicle.
pub fn vehicle_detections(scene: &SceneTruth, frame: usize, rig: &CameraRig) -> Result<Vec<VehicleView>, SimError> {
    let pose = scene.pose(frame)?;
    let mut out = Vec::new();
    for (camera, cam) in rig.cameras() {
        for (i, v) in scene.vehicles.iter().enumerate() {
            let (a, b, m) = near_side(v, &pose);
            if m.distance(&EGO_CENTER) > DETECTION_RANGE {
                continue;
            }
            let Some(qm) = cam.project_visible(m) else { continue };
            let width = match (cam.project_facing(a), cam.project_facing(b)) {
                (Some(qa), Some(qb)) => (qa.u - qb.u).abs(),
                _ => FALLBACK_BOX_WIDTH,
            };
            out.push(VehicleView { vehicle: i, camera, m: qm, width, ground: m });
        }
    }
    Ok(out)
}

/// Per side, the smallest lateral distance among near-side midpoints of
/// vehicles seen by at least one camera.
pub fn boundary_truth(scene: &SceneTruth, frame: usize, rig: &CameraRig) -> Result<Vec<(Side, f64)>, SimError> {
    let views = vehicle_detections(scene, frame, rig)?;
    let mut out = Vec::new();
    for side in [Side::Left, Side::Right] {
        let nearest = views
            .iter()
            .map(|v| v.ground.x)
            .filter(|x| x * side.sign() > 0.0)
            .map(f64::abs)
            .fold(f64::INFINITY, f64::min);
        if nearest.is_finite() {
            out.push((side, nearest * side.sign()));
        }
    }
    Ok(out)
}

/// Box whose bottom-edge midpoint is `m`, sized from the near-side span and
/// shrunk to fit in the image.
fn place_box(camera: CameraId, cam: &Camera, m: ImagePoint, w: f64, h: f64, score: f64) -> Option<DetectionBox> {
    if !cam.in_frame(m) {
        return None;
    }
    let w = w.min(2.0 * m.u.min(cam.width as f64 - m.u));
    let h = h.min(m.v);
    if w < MIN_BOX_SIDE || h < MIN_BOX_SIDE {
        return None;
    }
    let u = (m.u - w / 2.0).max(0.0);
    let w = w.min(cam.width as f64 - u);
    Some(DetectionBox { camera, u, v: m.v - h, w, h, score })
}

/// Boxes for one frame: visible vehicles minus misses, with jittered
/// keypoints and sizes, plus random false positives.
pub(crate) fn frame_detections(
    views: &[VehicleView],
    rig: &CameraRig,
    noise: &NoiseSpec,
    seed: u64,
    frame: usize,
) -> Vec<DetectionBox> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, frame as u64, STREAM_DETECTIONS));
    let jitter = Normal::new(0.0, noise.jitter_px).expect("validated jitter");
    let mut out = Vec::new();
    for view in views {
        let score = rng.random_range(0.75..0.99);
        let missed = rng.random_bool(noise.miss_prob);
        let d: [f64; 4] = std::array::from_fn(|_| jitter.sample(&mut rng));
        if missed {
            continue;
        }
        let w = view.width.max(MIN_BOX_WIDTH);
        let m = ImagePoint::new(view.m.u + d[0], view.m.v + d[1]);
        let cam = rig.camera(view.camera);
        if let Some(b) = place_box(view.camera, cam, m, w + d[2], 0.75 * w + d[3], score) {
            out.push(b);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, frame as u64, STREAM_FALSE_POSITIVES));
    for (camera, cam) in rig.cameras() {
        if !rng.random_bool(noise.fp_rate) {
            continue;
        }
        let (wd, ht) = (cam.width as f64, cam.height as f64);
        let w = rng.random_range(20.0..200.0);
        let m = ImagePoint::new(rng.random_range(0.0..wd), rng.random_range(ht / 2.0..ht));
        let score = rng.random_range(0.3..0.7);
        if let Some(b) = place_box(camera, cam, m, w, 0.75 * w, score) {
            out.push(b);
        }
    }
    out
}
