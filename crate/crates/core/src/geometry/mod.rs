//! Ground-plane homographies and inverse perspective mapping.
//!
//! Every camera in the rig observes the `Z = 0` ground plane, so the general
//! 11-parameter projective camera collapses to an 8-parameter rational map
//!
//! ```text
//! u = (G1 X + G2 Y + G4) / (G9 X + G10 Y + 1)
//! v = (G5 X + G6 Y + G8) / (G9 X + G10 Y + 1)
//! ```
//!
//! [`Homography`] stores those eight coefficients together with the inverse of
//! the equivalent 3x3 matrix, which makes [`Homography::ipm_to_ground`] a
//! single matrix-vector product.

mod pinhole;
mod rig;
mod warp;

pub use pinhole::PinholeCamera;
pub use rig::{
    BevSpec, Camera, CameraId, CameraRig, CameraSet, CalibrationFile, CameraCalibration,
    GroundRect, IpmTable, WorkingArea,
};
pub use warp::warp_to_bev;

use nalgebra::{DMatrix, Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Denominators smaller than this are treated as points on the horizon line.
pub const HORIZON_EPS: f64 = 1e-9;

/// Correspondence systems with a larger 2-norm condition number are rejected.
pub const DEFAULT_CONDITION_CAP: f64 = 1e10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate correspondences (condition number {condition:.3e})")]
    DegenerateCorrespondences { condition: f64 },
    #[error("point lies on the horizon line (denominator {denominator:.3e})")]
    HorizonSingularity { denominator: f64 },
    #[error("ground point ({x:.3}, {y:.3}) is outside the working area")]
    OutOfWorkingArea { x: f64, y: f64 },
    #[error("homography is not invertible")]
    Singular,
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
    #[error("calibration I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Metric point on the ground plane in the ego frame.
///
/// `x` is lateral (positive to the right of the ego vehicle), `y` is
/// longitudinal (positive along the heading). The origin is the front camera.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundPoint {
    pub x: f64,
    pub y: f64,
}

impl GroundPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &GroundPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Planar pose: position in meters and yaw in radians, counterclockwise
/// from the `+y` axis. The heading direction is `(-sin yaw, cos yaw)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl GroundPose {
    pub const fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.yaw.is_finite()
    }

    /// Expresses a world point in this pose's frame.
    pub fn world_to_local(&self, p: GroundPoint) -> GroundPoint {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (p.x - self.x, p.y - self.y);
        GroundPoint::new(c * dx + s * dy, -s * dx + c * dy)
    }

    pub fn local_to_world(&self, p: GroundPoint) -> GroundPoint {
        let (s, c) = self.yaw.sin_cos();
        GroundPoint::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }

    /// Pose of `next` expressed in this pose's frame.
    pub fn delta_to(&self, next: &GroundPose) -> GroundPose {
        let t = self.world_to_local(GroundPoint::new(next.x, next.y));
        GroundPose::new(t.x, t.y, next.yaw - self.yaw)
    }
}

/// Pixel coordinates, `u` along columns and `v` along rows. Integer values
/// are pixel centers.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
}

impl ImagePoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

/// Ground-to-image homography restricted to the `Z = 0` plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    coeffs: [f64; 8],
    inverse: Matrix3<f64>,
}

impl Homography {
    /// Builds a homography from `[G1, G2, G4, G5, G6, G8, G9, G10]`.
    pub fn from_coefficients(coeffs: [f64; 8]) -> Result<Self, GeometryError> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::InvalidCalibration(
                "non-finite homography coefficient".into(),
            ));
        }
        let m = Self::matrix_of(&coeffs);
        let det = m.determinant();
        let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if !det.is_finite() || det.abs() <= f64::EPSILON * scale.powi(3) {
            return Err(GeometryError::Singular);
        }
        let inverse = m.try_inverse().ok_or(GeometryError::Singular)?;
        Ok(Self { coeffs, inverse })
    }

    /// Builds a homography from a full 3x3 matrix, normalizing `h33` to one.
    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self, GeometryError> {
        let h33 = m[(2, 2)];
        if h33.abs() < HORIZON_EPS {
            return Err(GeometryError::Singular);
        }
        let n = m / h33;
        Self::from_coefficients([
            n[(0, 0)],
            n[(0, 1)],
            n[(0, 2)],
            n[(1, 0)],
            n[(1, 1)],
            n[(1, 2)],
            n[(2, 0)],
            n[(2, 1)],
        ])
    }

    pub fn identity() -> Self {
        Self::from_coefficients([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
            .expect("identity is invertible")
    }

    /// `[G1, G2, G4, G5, G6, G8, G9, G10]`.
    pub fn coefficients(&self) -> [f64; 8] {
        self.coeffs
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Self::matrix_of(&self.coeffs)
    }

    fn matrix_of(g: &[f64; 8]) -> Matrix3<f64> {
        Matrix3::new(g[0], g[1], g[2], g[3], g[4], g[5], g[6], g[7], 1.0)
    }

    /// Value of `G9 X + G10 Y + 1` at `p`.
    pub fn denominator(&self, p: GroundPoint) -> f64 {
        self.coeffs[6] * p.x + self.coeffs[7] * p.y + 1.0
    }

    /// Ground to image.
    pub fn project(&self, p: GroundPoint) -> Result<ImagePoint, GeometryError> {
        let g = &self.coeffs;
        let w = self.denominator(p);
        if w.abs() < HORIZON_EPS {
            return Err(GeometryError::HorizonSingularity { denominator: w });
        }
        Ok(ImagePoint {
            u: (g[0] * p.x + g[1] * p.y + g[2]) / w,
            v: (g[3] * p.x + g[4] * p.y + g[5]) / w,
        })
    }

    /// Image to ground, checked against the default working area.
    pub fn ipm_to_ground(&self, q: ImagePoint) -> Result<GroundPoint, GeometryError> {
        self.ipm_to_ground_within(q, &WorkingArea::default())
    }

    pub fn ipm_to_ground_within(
        &self,
        q: ImagePoint,
        area: &WorkingArea,
    ) -> Result<GroundPoint, GeometryError> {
        let p = self.ipm_unchecked(q)?;
        if !area.contains(p) {
            return Err(GeometryError::OutOfWorkingArea { x: p.x, y: p.y });
        }
        Ok(p)
    }

    /// Image to ground without the working-area check.
    pub fn ipm_unchecked(&self, q: ImagePoint) -> Result<GroundPoint, GeometryError> {
        let r = self.inverse * Vector3::new(q.u, q.v, 1.0);
        // Scale-free test: compare against the magnitude of the numerators.
        let mag = r.x.abs().max(r.y.abs()).max(1.0);
        if r.z.abs() < HORIZON_EPS * mag {
            return Err(GeometryError::HorizonSingularity { denominator: r.z });
        }
        let p = GroundPoint { x: r.x / r.z, y: r.y / r.z };
        if !p.is_finite() {
            return Err(GeometryError::HorizonSingularity { denominator: r.z });
        }
        Ok(p)
    }
}

/// Assembles the 8x8 system `A g = b` for four correspondences, with unknowns
/// ordered `[G1, G2, G4, G5, G6, G8, G9, G10]`.
pub fn correspondence_system(
    pairs: &[(GroundPoint, ImagePoint); 4],
) -> (SMatrix<f64, 8, 8>, SVector<f64, 8>) {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for (i, (g, q)) in pairs.iter().enumerate() {
        let (x, y) = (g.x, g.y);
        let r = 2 * i;
        a[(r, 0)] = x;
        a[(r, 1)] = y;
        a[(r, 2)] = 1.0;
        a[(r, 6)] = -q.u * x;
        a[(r, 7)] = -q.u * y;
        b[r] = q.u;
        a[(r + 1, 3)] = x;
        a[(r + 1, 4)] = y;
        a[(r + 1, 5)] = 1.0;
        a[(r + 1, 6)] = -q.v * x;
        a[(r + 1, 7)] = -q.v * y;
        b[r + 1] = q.v;
    }
    (a, b)
}

/// Solves the homography through four ground/image correspondences.
pub fn solve_homography(
    pairs: &[(GroundPoint, ImagePoint); 4],
) -> Result<Homography, GeometryError> {
    solve_homography_with_cap(pairs, DEFAULT_CONDITION_CAP)
}

pub fn solve_homography_with_cap(
    pairs: &[(GroundPoint, ImagePoint); 4],
    condition_cap: f64,
) -> Result<Homography, GeometryError> {
    if pairs.iter().any(|(g, q)| !g.is_finite() || !q.is_finite()) {
        return Err(GeometryError::InvalidCalibration(
            "non-finite correspondence".into(),
        ));
    }
    let (a, b) = correspondence_system(pairs);

    let sv = DMatrix::from_column_slice(8, 8, a.as_slice()).singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !condition.is_finite() || condition > condition_cap {
        return Err(GeometryError::DegenerateCorrespondences { condition });
    }

    let lu = a.lu();
    let mut g = lu
        .solve(&b)
        .ok_or(GeometryError::DegenerateCorrespondences { condition })?;
    // One round of iterative refinement keeps the reprojection residual at
    // the rounding floor even for badly scaled pixel coordinates.
    let residual = b - a * g;
    if let Some(delta) = lu.solve(&residual) {
        g += delta;
    }

    let coeffs: [f64; 8] = g.as_slice().try_into().expect("8 coefficients");
    Homography::from_coefficients(coeffs).map_err(|_| GeometryError::DegenerateCorrespondences {
        condition,
    })
}
