use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::detect::{boundary_truth, frame_detections, vehicle_detections};
use super::noise::{NoiseSpec, Outlier, OUTLIER_WARMUP};
use super::{mix_seed, SceneTruth, SimError, TrueLineKind};
use crate::boundary::{BoundaryLine, DetectionBox};
use crate::geometry::{BevSpec, CameraId, CameraRig, GroundPoint, GroundPose, ImagePoint};
use crate::landmark::{LandmarkKind, LineLandmark};
use crate::mask::{Class, SegMask};

const STREAM_OUTLIER: u64 = 1;
const STREAM_SPECKLE: u64 = 3;
const STREAM_OCCLUSION: u64 = 4;
const STREAM_DROPOUT: u64 = 5;

/// Minimum visible centerline extent, in BEV rows, for a line to count as a
/// ground-truth landmark of a frame.
const TRUTH_MIN_EXTENT: f64 = 50.0;

/// What the front-end would hand the pipeline for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameObservation {
    pub frame: usize,
    pub mask: SegMask,
    pub detections: Vec<DetectionBox>,
    /// Ego motion since the previous frame, in that frame's coordinates.
    pub ego_delta: GroundPose,
    pub outlier: Option<Outlier>,
}

/// One painted rectangle in ego coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stripe {
    pub class: Class,
    pub origin: GroundPoint,
    /// Unit direction along the stripe.
    pub dir: [f64; 2],
    pub length: f64,
    pub half_width: f64,
}

impl Stripe {
    fn between(class: Class, a: GroundPoint, b: GroundPoint, width: f64) -> Option<Self> {
        let length = a.distance(&b);
        if !(length > 0.0) {
            return None;
        }
        let dir = [(b.x - a.x) / length, (b.y - a.y) / length];
        Some(Self { class, origin: a, dir, length, half_width: width / 2.0 })
    }

    pub fn contains(&self, p: GroundPoint) -> bool {
        let (dx, dy) = (p.x - self.origin.x, p.y - self.origin.y);
        let t = dx * self.dir[0] + dy * self.dir[1];
        let n = self.dir[0] * dy - self.dir[1] * dx;
        (0.0..=self.length).contains(&t) && n.abs() <= self.half_width
    }

    /// `[xmin, xmax, ymin, ymax]`.
    pub fn bounds(&self) -> [f64; 4] {
        let [dx, dy] = self.dir;
        let (nx, ny) = (-dy * self.half_width, dx * self.half_width);
        let end = (self.origin.x + dx * self.length, self.origin.y + dy * self.length);
        let xs = [self.origin.x + nx, self.origin.x - nx, end.0 + nx, end.0 - nx];
        let ys = [self.origin.y + ny, self.origin.y - ny, end.1 + ny, end.1 - ny];
        [
            xs.iter().copied().fold(f64::INFINITY, f64::min),
            xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ys.iter().copied().fold(f64::INFINITY, f64::min),
            ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ]
    }
}

/// Every painted piece of the scene in the ego frame at `pose`. An outlier
/// displaces lane and median stripes.
pub fn frame_stripes(
    scene: &SceneTruth,
    pose: &GroundPose,
    outlier: Option<Outlier>,
    bev: &BevSpec,
) -> Vec<Stripe> {
    let mut out = Vec::new();
    for line in &scene.lines {
        let len = line.length();
        let dir = ((line.end.x - line.start.x) / len, (line.end.y - line.start.y) / len);
        let displace = |p: GroundPoint| match outlier {
            Some(o) if matches!(line.kind, TrueLineKind::Lane | TrueLineKind::Median) => {
                GroundPoint::new(p.x + o.offset * bev.scale + o.slope * p.y, p.y)
            }
            _ => p,
        };
        for (a, b) in line.pieces() {
            let at = |s: f64| {
                let w = GroundPoint::new(line.start.x + dir.0 * s, line.start.y + dir.1 * s);
                displace(pose.world_to_local(w))
            };
            if let Some(st) = Stripe::between(line.kind.class(), at(a), at(b), line.width) {
                out.push(st);
            }
        }
    }
    out
}

/// Label of an ego-frame ground point, by direct test against every painted
/// piece in world coordinates. Overlaps resolve to the larger class code.
pub fn point_label(scene: &SceneTruth, pose: &GroundPose, p: GroundPoint) -> Class {
    let w = pose.local_to_world(p);
    let mut best = Class::Background;
    for line in &scene.lines {
        let len = line.length();
        let (dx, dy) = ((line.end.x - line.start.x) / len, (line.end.y - line.start.y) / len);
        let (rx, ry) = (w.x - line.start.x, w.y - line.start.y);
        let along = rx * dx + ry * dy;
        let across = (dx * ry - dy * rx).abs();
        if across > line.width / 2.0 {
            continue;
        }
        if line.pieces().iter().any(|&(a, b)| along >= a && along <= b) {
            best = best.max(line.kind.class());
        }
    }
    best
}

/// Noise-free BEV rasterization: a cell is painted when its center lies in
/// a stripe.
pub fn render_bev(stripes: &[Stripe], bev: &BevSpec) -> SegMask {
    let mut mask = SegMask::new(bev.rows, bev.cols);
    for st in stripes {
        let [xmin, xmax, ymin, ymax] = st.bounds();
        let (r_lo, c_lo) = bev.ground_to_cell(GroundPoint::new(xmin, ymax));
        let (r_hi, c_hi) = bev.ground_to_cell(GroundPoint::new(xmax, ymin));
        let Some(rows) = clamp_range(r_lo, r_hi, bev.rows) else { continue };
        let Some(cols) = clamp_range(c_lo, c_hi, bev.cols) else { continue };
        for row in rows {
            for col in cols.clone() {
                if st.contains(bev.cell_to_ground(row as f64, col as f64)) && mask.get(row, col) < st.class {
                    mask.set(row, col, st.class);
                }
            }
        }
    }
    mask
}

fn clamp_range(lo: f64, hi: f64, n: usize) -> Option<std::ops::Range<usize>> {
    let lo = lo.floor().max(0.0);
    let hi = (hi.ceil() + 1.0).min(n as f64);
    (hi > lo).then(|| lo as usize..hi as usize)
}

/// Uniform grid over stripes for fast point labeling.
#[derive(Debug, Clone)]
pub struct StripeIndex {
    stripes: Vec<Stripe>,
    extent: f64,
    cell: f64,
    side: usize,
    buckets: Vec<Vec<u32>>,
}

impl StripeIndex {
    /// Indexes the square `[-extent, extent]^2` with `cell`-meter buckets.
    pub fn new(stripes: Vec<Stripe>, extent: f64, cell: f64) -> Self {
        let side = ((2.0 * extent / cell).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); side * side];
        let to_bucket = |v: f64| (((v + extent) / cell).floor().max(0.0) as usize).min(side - 1);
        for (i, st) in stripes.iter().enumerate() {
            let [xmin, xmax, ymin, ymax] = st.bounds();
            if xmax < -extent || xmin > extent || ymax < -extent || ymin > extent {
                continue;
            }
            for by in to_bucket(ymin)..=to_bucket(ymax) {
                for bx in to_bucket(xmin)..=to_bucket(xmax) {
                    buckets[by * side + bx].push(i as u32);
                }
            }
        }
        Self { stripes, extent, cell, side, buckets }
    }

    pub fn label(&self, p: GroundPoint) -> Class {
        if !(p.x.abs() <= self.extent && p.y.abs() <= self.extent) {
            return Class::Background;
        }
        let b = |v: f64| (((v + self.extent) / self.cell).floor() as usize).min(self.side - 1);
        let mut best = Class::Background;
        for &i in &self.buckets[b(p.y) * self.side + b(p.x)] {
            let st = &self.stripes[i as usize];
            if st.class > best && st.contains(p) {
                best = st.class;
            }
        }
        best
    }
}

/// Noise-free per-camera label images: each pixel center is back-projected
/// to the ground and labeled there.
pub fn render_camera_masks(
    scene: &SceneTruth,
    frame: usize,
    rig: &CameraRig,
) -> Result<[SegMask; 4], SimError> {
    let pose = scene.pose(frame)?;
    let index = StripeIndex::new(frame_stripes(scene, &pose, None, &rig.bev), rig.area.extent, 1.0);
    Ok(CameraId::ALL.map(|id| {
        let cam = rig.camera(id);
        let mut m = SegMask::new(cam.height as usize, cam.width as usize);
        for r in 0..cam.height as usize {
            for c in 0..cam.width as usize {
                let Some(g) = cam.pixel_faces_ground(ImagePoint::new(c as f64, r as f64)) else {
                    continue;
                };
                if rig.area.contains(g) {
                    let class = index.label(g);
                    if class != Class::Background {
                        m.set(r, c, class);
                    }
                }
            }
        }
        m
    }))
}

fn frame_outlier(noise: &NoiseSpec, seed: u64, frame: usize) -> Option<Outlier> {
    if frame < OUTLIER_WARMUP || noise.outlier_rate <= 0.0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, frame as u64, STREAM_OUTLIER));
    if !rng.random_bool(noise.outlier_rate) {
        return None;
    }
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    Some(Outlier { offset: sign * noise.outlier_offset, slope: sign * noise.outlier_slope })
}

fn dilate(mask: &SegMask, r: usize) -> SegMask {
    let mut out = mask.clone();
    let (rows, cols) = (mask.rows(), mask.cols());
    for row in 0..rows {
        for col in 0..cols {
            if mask.get(row, col) != Class::Background {
                continue;
            }
            let mut best = Class::Background;
            for rr in row.saturating_sub(r)..(row + r + 1).min(rows) {
                for cc in col.saturating_sub(r)..(col + r + 1).min(cols) {
                    best = best.max(mask.get(rr, cc));
                }
            }
            out.set(row, col, best);
        }
    }
    out
}

fn erode(mask: &SegMask, r: usize) -> SegMask {
    let mut out = mask.clone();
    let (rows, cols) = (mask.rows(), mask.cols());
    for row in 0..rows {
        for col in 0..cols {
            if mask.get(row, col) == Class::Background {
                continue;
            }
            let touches_bg = (row.saturating_sub(r)..(row + r + 1).min(rows)).any(|rr| {
                (col.saturating_sub(r)..(col + r + 1).min(cols))
                    .any(|cc| mask.get(rr, cc) == Class::Background)
            });
            if touches_bg {
                out.set(row, col, Class::Background);
            }
        }
    }
    out
}

/// Morphology, speckle, occlusion, then dropout; dropout last so that
/// `p_drop = 1` always yields an empty mask.
fn corrupt_mask(mut mask: SegMask, noise: &NoiseSpec, seed: u64, frame: usize) -> SegMask {
    let rng_for = |stream| ChaCha8Rng::seed_from_u64(mix_seed(seed, frame as u64, stream));
    let (rows, cols) = (mask.rows(), mask.cols());
    if noise.dilate > 0 {
        mask = dilate(&mask, noise.dilate);
    }
    if noise.erode > 0 {
        mask = erode(&mask, noise.erode);
    }
    let mut rng = rng_for(STREAM_SPECKLE);
    for _ in 0..noise.speckle {
        let (r, c) = (rng.random_range(0..rows), rng.random_range(0..cols));
        mask.set(r, c, Class::FOREGROUND[rng.random_range(0..3)]);
    }
    let mut rng = rng_for(STREAM_OCCLUSION);
    if noise.occlusion_size > 0 {
        for _ in 0..noise.occlusions {
            let h = rng.random_range(1..=noise.occlusion_size);
            let w = rng.random_range(1..=noise.occlusion_size);
            let (r0, c0) = (rng.random_range(0..rows), rng.random_range(0..cols));
            for r in r0..(r0 + h).min(rows) {
                for c in c0..(c0 + w).min(cols) {
                    mask.set(r, c, Class::Background);
                }
            }
        }
    }
    if noise.p_drop > 0.0 {
        let mut rng = rng_for(STREAM_DROPOUT);
        for r in 0..rows {
            for c in 0..cols {
                if mask.get(r, c) != Class::Background && rng.random_bool(noise.p_drop) {
                    mask.set(r, c, Class::Background);
                }
            }
        }
    }
    mask
}

/// Observation of `frame`: BEV mask rendered at the frame's pose and
/// corrupted per `noise`, plus vehicle boxes in each camera.
pub fn render_frame(
    scene: &SceneTruth,
    frame: usize,
    rig: &CameraRig,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<FrameObservation, SimError> {
    noise.validate()?;
    let pose = scene.pose(frame)?;
    let outlier = frame_outlier(noise, seed, frame);
    let stripes = frame_stripes(scene, &pose, outlier, &rig.bev);
    let mask = corrupt_mask(render_bev(&stripes, &rig.bev), noise, seed, frame);
    let views = vehicle_detections(scene, frame, rig)?;
    let detections = frame_detections(&views, rig, noise, seed, frame);
    Ok(FrameObservation { frame, mask, detections, ego_delta: scene.ego_delta(frame)?, outlier })
}

/// Ground-truth landmarks of a frame: longitudinal markings with enough
/// visible extent in the BEV raster, and the per-side vehicle boundaries.
/// Horizontal parking separators are not landmarks.
pub fn frame_truth(scene: &SceneTruth, frame: usize, rig: &CameraRig) -> Result<Vec<LineLandmark>, SimError> {
    let pose = scene.pose(frame)?;
    let bev = &rig.bev;
    let mut out = Vec::new();
    for line in &scene.lines {
        let kind = match line.kind {
            TrueLineKind::Lane => LandmarkKind::Lane,
            TrueLineKind::Median => LandmarkKind::Median,
            TrueLineKind::ParkingLongitudinal => LandmarkKind::Parking,
            TrueLineKind::ParkingHorizontal => continue,
        };
        let Some((beta, theta)) = line.bev_params(&pose, bev) else { continue };
        // Raster limits on v, then the column limits mapped onto v.
        let (mut lo, mut hi) = (bev.row_to_v((bev.rows - 1) as f64), bev.row_to_v(0.0));
        if beta != 0.0 {
            let (a, b) = ((0.0 - theta) / beta, ((bev.cols - 1) as f64 - theta) / beta);
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
        } else if !(0.0..=(bev.cols - 1) as f64).contains(&theta) {
            continue;
        }
        let (_, v0) = bev.ground_to_lane(pose.world_to_local(line.start));
        let (_, v1) = bev.ground_to_lane(pose.world_to_local(line.end));
        let len = line.length();
        let (mut extent, mut moment) = (0.0, 0.0);
        for (a, b) in line.pieces() {
            let (va, vb) = (v0 + (v1 - v0) * a / len, v0 + (v1 - v0) * b / len);
            let (pa, pb) = (va.min(vb).max(lo), va.max(vb).min(hi));
            if pb > pa {
                extent += pb - pa;
                moment += (pb - pa) * (pa + pb) / 2.0;
            }
        }
        if extent >= TRUTH_MIN_EXTENT {
            let cv = moment / extent;
            out.push(LineLandmark::new(kind, beta, theta, [beta * cv + theta, cv], 1.0));
        }
    }
    for (side, offset) in boundary_truth(scene, frame, rig)? {
        out.push(BoundaryLine { side, offset, support: Vec::new() }.to_landmark(bev));
    }
    Ok(out)
}
