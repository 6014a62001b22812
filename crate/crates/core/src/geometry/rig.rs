use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{solve_homography, GeometryError, GroundPoint, Homography, ImagePoint, PinholeCamera};

/// Surround-view cameras, in warp priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraId {
    Front,
    Rear,
    Left,
    Right,
}

impl CameraId {
    pub const ALL: [CameraId; 4] = [CameraId::Front, CameraId::Rear, CameraId::Left, CameraId::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CameraId::Front => "front",
            CameraId::Rear => "rear",
            CameraId::Left => "left",
            CameraId::Right => "right",
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for CameraId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CameraId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "front" => Ok(CameraId::Front),
            "rear" => Ok(CameraId::Rear),
            "left" => Ok(CameraId::Left),
            "right" => Ok(CameraId::Right),
            other => Err(format!("unknown camera '{other}'")),
        }
    }
}

/// Small bit set of cameras, used to record which views contributed to a
/// merged keypoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct CameraSet(u8);

impl CameraSet {
    pub fn single(id: CameraId) -> Self {
        Self(1 << id.index())
    }

    pub fn contains(self, id: CameraId) -> bool {
        self.0 & (1 << id.index()) != 0
    }

    pub fn is_disjoint(self, other: CameraSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn union(self, other: CameraSet) -> Self {
        Self(self.0 | other.0)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = CameraId> {
        CameraId::ALL.into_iter().filter(move |id| self.contains(*id))
    }

    pub fn bits(self) -> u8 {
        self.0
    }
}

/// Axis-aligned ground rectangle in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundRect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl GroundRect {
    pub fn contains(&self, p: GroundPoint) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn center(&self) -> GroundPoint {
        GroundPoint::new((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }
}

/// Square ground region `|x|, |y| <= extent` where IPM results are trusted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkingArea {
    pub extent: f64,
}

impl Default for WorkingArea {
    fn default() -> Self {
        Self { extent: 50.0 }
    }
}

impl WorkingArea {
    pub fn contains(&self, p: GroundPoint) -> bool {
        p.is_finite() && p.x.abs() <= self.extent && p.y.abs() <= self.extent
    }
}

/// BEV raster layout. Row 0 is the farthest-forward row; cell centers sit at
/// integer `(row, col)`; the ego origin maps to `(origin_row, origin_col)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BevSpec {
    pub rows: usize,
    pub cols: usize,
    /// Meters per cell.
    pub scale: f64,
    pub origin_row: f64,
    pub origin_col: f64,
}

impl Default for BevSpec {
    fn default() -> Self {
        Self { rows: 600, cols: 480, scale: 0.02, origin_row: 300.0, origin_col: 240.0 }
    }
}

impl BevSpec {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(GeometryError::InvalidCalibration("BEV dimensions must be positive".into()));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(GeometryError::InvalidCalibration("BEV scale must be positive".into()));
        }
        if !self.origin_row.is_finite() || !self.origin_col.is_finite() {
            return Err(GeometryError::InvalidCalibration("BEV origin must be finite".into()));
        }
        Ok(())
    }

    pub fn cell_to_ground(&self, row: f64, col: f64) -> GroundPoint {
        GroundPoint::new((col - self.origin_col) * self.scale, (self.origin_row - row) * self.scale)
    }

    /// Returns `(row, col)` as real-valued cell coordinates.
    pub fn ground_to_cell(&self, p: GroundPoint) -> (f64, f64) {
        (self.origin_row - p.y / self.scale, self.origin_col + p.x / self.scale)
    }

    /// Landmark coordinates `(u, v)`: `u` is the column, `v` counts cells
    /// forward from the ego row.
    pub fn ground_to_lane(&self, p: GroundPoint) -> (f64, f64) {
        (self.origin_col + p.x / self.scale, p.y / self.scale)
    }

    pub fn lane_to_ground(&self, u: f64, v: f64) -> GroundPoint {
        GroundPoint::new((u - self.origin_col) * self.scale, v * self.scale)
    }

    pub fn row_to_v(&self, row: f64) -> f64 {
        self.origin_row - row
    }

    pub fn v_to_row(&self, v: f64) -> f64 {
        self.origin_row - v
    }

    /// Ground-to-raster homography (`u` = column, `v` = row).
    pub fn homography(&self) -> Homography {
        let k = 1.0 / self.scale;
        Homography::from_coefficients([k, 0.0, self.origin_col, 0.0, -k, self.origin_row, 0.0, 0.0])
            .expect("positive scale gives an invertible map")
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }
}

/// Regular-grid image-to-ground lookup table, the pluggable replacement for
/// an analytic inverse on real (distorted) rigs.
#[derive(Debug, Clone, PartialEq)]
pub struct IpmTable {
    u0: f64,
    v0: f64,
    step: f64,
    nu: usize,
    nv: usize,
    ground: Vec<GroundPoint>,
}

impl IpmTable {
    /// Loads a CSV with header `u,v,x,y` whose `(u, v)` samples form a
    /// complete regular grid.
    pub fn load(path: &Path) -> Result<Self, GeometryError> {
        let io = |e: &dyn fmt::Display| GeometryError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let mut reader = csv::Reader::from_path(path).map_err(|e| io(&e))?;
        let mut rows: Vec<[f64; 4]> = Vec::new();
        for rec in reader.deserialize::<(f64, f64, f64, f64)>() {
            let (u, v, x, y) = rec.map_err(|e| io(&e))?;
            rows.push([u, v, x, y]);
        }
        Self::from_samples(&rows)
    }

    pub fn from_samples(rows: &[[f64; 4]]) -> Result<Self, GeometryError> {
        let bad = |m: &str| GeometryError::InvalidCalibration(format!("IPM table: {m}"));
        if rows.len() < 4 {
            return Err(bad("need at least a 2x2 grid"));
        }
        let mut us: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let mut vs: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        us.sort_by(f64::total_cmp);
        us.dedup();
        vs.sort_by(f64::total_cmp);
        vs.dedup();
        let (nu, nv) = (us.len(), vs.len());
        if nu < 2 || nv < 2 || nu * nv != rows.len() {
            return Err(bad("samples do not form a complete grid"));
        }
        let step = us[1] - us[0];
        let regular = |xs: &[f64]| xs.windows(2).all(|w| ((w[1] - w[0]) - step).abs() < 1e-9);
        if step <= 0.0 || !regular(&us) || !regular(&vs) {
            return Err(bad("grid spacing must be uniform and equal in u and v"));
        }
        let mut ground = vec![GroundPoint::default(); nu * nv];
        for r in rows {
            let i = ((r[0] - us[0]) / step).round() as usize;
            let j = ((r[1] - vs[0]) / step).round() as usize;
            ground[j * nu + i] = GroundPoint::new(r[2], r[3]);
        }
        Ok(Self { u0: us[0], v0: vs[0], step, nu, nv, ground })
    }

    /// Bilinear interpolation; `None` outside the sampled grid.
    pub fn lookup(&self, q: ImagePoint) -> Option<GroundPoint> {
        let fu = (q.u - self.u0) / self.step;
        let fv = (q.v - self.v0) / self.step;
        if !(fu >= 0.0 && fv >= 0.0) || fu > (self.nu - 1) as f64 || fv > (self.nv - 1) as f64 {
            return None;
        }
        let i = (fu.floor() as usize).min(self.nu - 2);
        let j = (fv.floor() as usize).min(self.nv - 2);
        let (a, b) = (fu - i as f64, fv - j as f64);
        let at = |i: usize, j: usize| self.ground[j * self.nu + i];
        let (p00, p10, p01, p11) = (at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1));
        let lerp = |s: f64, t: f64, u: f64, w: f64| {
            (1.0 - b) * ((1.0 - a) * s + a * t) + b * ((1.0 - a) * u + a * w)
        };
        Some(GroundPoint::new(
            lerp(p00.x, p10.x, p01.x, p11.x),
            lerp(p00.y, p10.y, p01.y, p11.y),
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub homography: Homography,
    pub width: u32,
    pub height: u32,
    /// Ground region this camera is responsible for when stitching.
    pub roi: Option<GroundRect>,
    pub ipm_table: Option<IpmTable>,
    facing: f64,
}

impl Camera {
    pub fn new(homography: Homography, width: u32, height: u32, roi: Option<GroundRect>) -> Self {
        // Points in front of the camera share the sign of the denominator
        // at a point known to be visible.
        let facing = roi
            .map(|r| homography.denominator(r.center()).signum())
            .filter(|s| *s != 0.0)
            .unwrap_or(1.0);
        Self { homography, width, height, roi, ipm_table: None, facing }
    }

    pub fn in_frame(&self, q: ImagePoint) -> bool {
        q.u >= 0.0 && q.v >= 0.0 && q.u < self.width as f64 && q.v < self.height as f64
    }

    /// Projection of `p` when it lies in front of the camera, possibly
    /// outside the image.
    pub fn project_facing(&self, p: GroundPoint) -> Option<ImagePoint> {
        if self.homography.denominator(p) * self.facing <= 0.0 {
            return None;
        }
        self.homography.project(p).ok()
    }

    /// Projection of `p` when it lies in front of the camera and inside the
    /// image, regardless of the stitching region.
    pub fn project_visible(&self, p: GroundPoint) -> Option<ImagePoint> {
        self.project_facing(p).filter(|q| self.in_frame(*q))
    }

    /// Whether an image point back-projects in front of the camera.
    pub fn pixel_faces_ground(&self, q: ImagePoint) -> Option<GroundPoint> {
        let g = self.homography.ipm_unchecked(q).ok()?;
        (self.homography.denominator(g) * self.facing > 0.0).then_some(g)
    }

    /// Nearest pixel of `p` when the camera owns and sees it.
    pub fn sees(&self, p: GroundPoint) -> Option<(usize, usize)> {
        if let Some(roi) = &self.roi {
            if !roi.contains(p) {
                return None;
            }
        }
        if self.homography.denominator(p) * self.facing <= 0.0 {
            return None;
        }
        let q = self.homography.project(p).ok()?;
        let (u, v) = (q.u.round(), q.v.round());
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        Some((v as usize, u as usize))
    }
}

/// Four surround-view cameras plus the BEV raster they are stitched into.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    cameras: [Camera; 4],
    pub bev: BevSpec,
    pub area: WorkingArea,
}

impl CameraRig {
    pub fn new(cameras: [Camera; 4], bev: BevSpec, area: WorkingArea) -> Result<Self, GeometryError> {
        bev.validate()?;
        if !(area.extent > 0.0) {
            return Err(GeometryError::InvalidCalibration("working extent must be positive".into()));
        }
        Ok(Self { cameras, bev, area })
    }

    pub fn camera(&self, id: CameraId) -> &Camera {
        &self.cameras[id.index()]
    }

    pub fn cameras(&self) -> impl Iterator<Item = (CameraId, &Camera)> {
        CameraId::ALL.into_iter().zip(self.cameras.iter())
    }

    /// Image-to-ground through `id`, using its lookup table when present.
    pub fn ipm(&self, id: CameraId, q: ImagePoint) -> Result<GroundPoint, GeometryError> {
        let cam = self.camera(id);
        match &cam.ipm_table {
            Some(table) => {
                let p = table
                    .lookup(q)
                    .ok_or(GeometryError::OutOfWorkingArea { x: f64::NAN, y: f64::NAN })?;
                if self.area.contains(p) {
                    Ok(p)
                } else {
                    Err(GeometryError::OutOfWorkingArea { x: p.x, y: p.y })
                }
            }
            None => cam.homography.ipm_to_ground_within(q, &self.area),
        }
    }

    /// Pinhole models behind [`CameraRig::default_rig`]: 1280x960 wide-angle
    /// cameras at bumper and mirror positions of a 4.6 m vehicle whose front
    /// camera is the ego origin.
    pub fn default_pinholes() -> [PinholeCamera; 4] {
        let cam = |position: [f64; 3], azimuth: f64, pitch_deg: f64| PinholeCamera {
            position,
            azimuth,
            pitch: pitch_deg.to_radians(),
            focal: 260.0,
            width: 1280,
            height: 960,
        };
        use std::f64::consts::{FRAC_PI_2, PI};
        [
            cam([0.0, 0.0, 1.0], 0.0, 35.0),
            cam([0.0, -4.6, 1.0], PI, 35.0),
            cam([-0.95, -2.0, 1.0], -FRAC_PI_2, 75.0),
            cam([0.95, -2.0, 1.0], FRAC_PI_2, 75.0),
        ]
    }

    pub fn default_rois() -> [GroundRect; 4] {
        let e = WorkingArea::default().extent;
        [
            GroundRect { x_min: -e, x_max: e, y_min: 0.0, y_max: e },
            GroundRect { x_min: -e, x_max: e, y_min: -e, y_max: -4.6 },
            GroundRect { x_min: -e, x_max: 0.0, y_min: -e, y_max: e },
            GroundRect { x_min: 0.0, x_max: e, y_min: -e, y_max: e },
        ]
    }

    pub fn from_pinholes(
        pinholes: &[PinholeCamera; 4],
        rois: [Option<GroundRect>; 4],
        bev: BevSpec,
    ) -> Result<Self, GeometryError> {
        let mut cams = Vec::with_capacity(4);
        for (p, roi) in pinholes.iter().zip(rois) {
            cams.push(Camera::new(p.homography()?, p.width, p.height, roi));
        }
        let cameras: [Camera; 4] = cams.try_into().expect("four cameras");
        Self::new(cameras, bev, WorkingArea::default())
    }

    pub fn default_rig() -> Self {
        Self::from_pinholes(&Self::default_pinholes(), Self::default_rois().map(Some), BevSpec::default())
            .expect("default rig is valid")
    }

    /// Every camera images the BEV raster itself.
    pub fn identity_rig(bev: BevSpec) -> Self {
        let cam = Camera::new(bev.homography(), bev.cols as u32, bev.rows as u32, None);
        Self::new([cam.clone(), cam.clone(), cam.clone(), cam], bev, WorkingArea::default())
            .expect("valid BEV spec")
    }

    pub fn to_calibration(&self) -> CalibrationFile {
        let cameras = self
            .cameras()
            .map(|(id, c)| {
                (
                    id,
                    CameraCalibration {
                        image_width: c.width,
                        image_height: c.height,
                        homography: Some(c.homography.coefficients()),
                        pairs: None,
                        roi: c.roi.map(|r| [r.x_min, r.x_max, r.y_min, r.y_max]),
                        ipm_table: None,
                    },
                )
            })
            .collect();
        CalibrationFile { version: 1, bev: self.bev, working_extent: self.area.extent, cameras }
    }

    pub fn load(path: &Path) -> Result<Self, GeometryError> {
        let text = std::fs::read_to_string(path).map_err(|e| GeometryError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let file: CalibrationFile = toml::from_str(&text)
            .map_err(|e| GeometryError::InvalidCalibration(format!("{}: {e}", path.display())))?;
        file.into_rig(path.parent())
    }

    pub fn save(&self, path: &Path) -> Result<(), GeometryError> {
        std::fs::write(path, self.to_calibration().to_toml()).map_err(|e| GeometryError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// SHA-256 of the canonical calibration text.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_calibration().to_toml().as_bytes()))
    }
}

/// On-disk calibration: per camera either eight homography coefficients or
/// four ground/image correspondences, never both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub version: u32,
    pub bev: BevSpec,
    #[serde(default = "default_extent")]
    pub working_extent: f64,
    pub cameras: BTreeMap<CameraId, CameraCalibration>,
}

fn default_extent() -> f64 {
    WorkingArea::default().extent
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraCalibration {
    pub image_width: u32,
    pub image_height: u32,
    /// `[G1, G2, G4, G5, G6, G8, G9, G10]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homography: Option<[f64; 8]>,
    /// Four `[X, Y, u, v]` correspondences.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<[[f64; 4]; 4]>,
    /// `[x_min, x_max, y_min, y_max]` in meters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roi: Option<[f64; 4]>,
    /// CSV lookup table (`u,v,x,y`), relative to the calibration file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ipm_table: Option<PathBuf>,
}

impl CalibrationFile {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("calibration serializes")
    }

    pub fn into_rig(self, base: Option<&Path>) -> Result<CameraRig, GeometryError> {
        let bad = |m: String| GeometryError::InvalidCalibration(m);
        if self.version != 1 {
            return Err(bad(format!("unsupported calibration version {}", self.version)));
        }
        let mut cams: Vec<Camera> = Vec::with_capacity(4);
        for id in CameraId::ALL {
            let c = self
                .cameras
                .get(&id)
                .ok_or_else(|| bad(format!("camera '{id}' missing")))?;
            let homography = match (&c.homography, &c.pairs) {
                (Some(_), Some(_)) => {
                    return Err(bad(format!("camera '{id}': both homography and pairs given")))
                }
                (None, None) => {
                    return Err(bad(format!("camera '{id}': neither homography nor pairs given")))
                }
                (Some(g), None) => Homography::from_coefficients(*g)?,
                (None, Some(p)) => solve_homography(
                    &p.map(|[x, y, u, v]| (GroundPoint::new(x, y), ImagePoint::new(u, v))),
                )?,
            };
            if c.image_width == 0 || c.image_height == 0 {
                return Err(bad(format!("camera '{id}': image size must be positive")));
            }
            let roi = c.roi.map(|[x_min, x_max, y_min, y_max]| GroundRect { x_min, x_max, y_min, y_max });
            if let Some(r) = &roi {
                if !(r.x_min < r.x_max && r.y_min < r.y_max) {
                    return Err(bad(format!("camera '{id}': empty roi")));
                }
            }
            let mut cam = Camera::new(homography, c.image_width, c.image_height, roi);
            if let Some(table) = &c.ipm_table {
                let path = match base {
                    Some(b) if table.is_relative() => b.join(table),
                    _ => table.clone(),
                };
                cam.ipm_table = Some(IpmTable::load(&path)?);
            }
            cams.push(cam);
        }
        let cameras: [Camera; 4] = cams.try_into().expect("four cameras");
        CameraRig::new(cameras, self.bev, WorkingArea { extent: self.working_extent })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_bev_matches_reported_raster() {
        let bev = BevSpec::default();
        assert_eq!((bev.rows, bev.cols), (600, 480));
        let g = bev.cell_to_ground(300.0, 240.0);
        assert_eq!(g, GroundPoint::new(0.0, 0.0));
        // Row 0 is the farthest forward.
        assert!(bev.cell_to_ground(0.0, 240.0).y > 0.0);
    }

    #[test]
    fn bev_homography_matches_cell_mapping() {
        let bev = BevSpec::default();
        let h = bev.homography();
        let p = GroundPoint::new(1.3, -2.1);
        let q = h.project(p).unwrap();
        let (r, c) = bev.ground_to_cell(p);
        assert!((q.u - c).abs() < 1e-12 && (q.v - r).abs() < 1e-12);
    }

    #[test]
    fn calibration_round_trip() {
        let rig = CameraRig::default_rig();
        let text = rig.to_calibration().to_toml();
        let back: CalibrationFile = toml::from_str(&text).unwrap();
        let rig2 = back.into_rig(None).unwrap();
        assert_eq!(rig, rig2);
        assert_eq!(rig.hash(), rig2.hash());
    }

    #[test]
    fn calibration_rejects_both_or_neither() {
        let mut file = CameraRig::default_rig().to_calibration();
        let front = file.cameras.get_mut(&CameraId::Front).unwrap();
        front.pairs = Some([
            [0.0, 1.0, 600.0, 700.0],
            [1.0, 1.0, 800.0, 700.0],
            [1.0, 2.0, 750.0, 600.0],
            [0.0, 2.0, 620.0, 600.0],
        ]);
        let err = file.clone().into_rig(None).unwrap_err();
        assert!(err.to_string().contains("both"), "{err}");

        let front = file.cameras.get_mut(&CameraId::Front).unwrap();
        front.pairs = None;
        front.homography = None;
        let err = file.into_rig(None).unwrap_err();
        assert!(err.to_string().contains("neither"), "{err}");
    }

    #[test]
    fn calibration_from_pairs() {
        let rig = CameraRig::default_rig();
        let pin = CameraRig::default_pinholes()[0];
        let ground = [(-1.0, 2.0), (1.0, 2.0), (1.5, 5.0), (-1.5, 5.0)];
        let pairs = ground.map(|(x, y)| {
            let q = pin.project(GroundPoint::new(x, y)).unwrap();
            [x, y, q.u, q.v]
        });
        let mut file = rig.to_calibration();
        let front = file.cameras.get_mut(&CameraId::Front).unwrap();
        front.homography = None;
        front.pairs = Some(pairs);
        let rig2 = file.into_rig(None).unwrap();
        let a = rig.camera(CameraId::Front).homography.coefficients();
        let b = rig2.camera(CameraId::Front).homography.coefficients();
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-6 * x.abs().max(1.0));
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = CameraRig::default_rig().to_calibration().to_toml();
        text.push_str("\nbogus = 3\n");
        assert!(toml::from_str::<CalibrationFile>(&text).is_err());
    }

    #[test]
    fn ipm_table_interpolates_affine_maps_exactly() {
        let mut rows = Vec::new();
        for j in 0..5 {
            for i in 0..5 {
                let (u, v) = (i as f64 * 10.0, j as f64 * 10.0);
                rows.push([u, v, 0.1 * u + 1.0, -0.05 * v + 2.0]);
            }
        }
        let t = IpmTable::from_samples(&rows).unwrap();
        let p = t.lookup(ImagePoint::new(13.0, 27.5)).unwrap();
        assert!((p.x - 2.3).abs() < 1e-12 && (p.y - (2.0 - 1.375)).abs() < 1e-12);
        assert!(t.lookup(ImagePoint::new(41.0, 0.0)).is_none());
        assert!(IpmTable::from_samples(&rows[..24]).is_err());
    }

    #[test]
    fn camera_set_ops() {
        let a = CameraSet::single(CameraId::Front);
        let b = CameraSet::single(CameraId::Left);
        assert!(a.is_disjoint(b));
        let ab = a.union(b);
        assert_eq!(ab.len(), 2);
        assert!(!ab.is_disjoint(b));
        assert_eq!(ab.iter().collect::<Vec<_>>(), vec![CameraId::Front, CameraId::Left]);
    }
}
