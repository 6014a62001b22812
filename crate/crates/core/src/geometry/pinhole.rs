use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{GeometryError, GroundPoint, Homography, ImagePoint};

/// Ideal pinhole camera looking at the ground plane.
///
/// `azimuth` is the heading of the optical axis in the ground plane, measured
/// from `+y` toward `+x` (so `0` looks forward and `pi/2` looks right).
/// `pitch` tilts the axis down from the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinholeCamera {
    pub position: [f64; 3],
    pub azimuth: f64,
    pub pitch: f64,
    pub focal: f64,
    pub width: u32,
    pub height: u32,
}

impl PinholeCamera {
    /// World-to-camera rotation; rows are the camera right, down and forward
    /// axes expressed in the ego frame.
    pub fn rotation(&self) -> Matrix3<f64> {
        let (sa, ca) = self.azimuth.sin_cos();
        let (sp, cp) = self.pitch.sin_cos();
        let forward = Vector3::new(sa * cp, ca * cp, -sp);
        let right = Vector3::new(ca, -sa, 0.0);
        let down = forward.cross(&right);
        Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()])
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        let cx = (self.width as f64 - 1.0) / 2.0;
        let cy = (self.height as f64 - 1.0) / 2.0;
        Matrix3::new(self.focal, 0.0, cx, 0.0, self.focal, cy, 0.0, 0.0, 1.0)
    }

    fn camera_coords(&self, p: GroundPoint) -> Vector3<f64> {
        let c = Vector3::from(self.position);
        self.rotation() * (Vector3::new(p.x, p.y, 0.0) - c)
    }

    /// Signed depth of a ground point along the optical axis.
    pub fn depth(&self, p: GroundPoint) -> f64 {
        self.camera_coords(p).z
    }

    /// Projects a ground point; `None` when it is behind the camera.
    pub fn project(&self, p: GroundPoint) -> Option<ImagePoint> {
        let pc = self.camera_coords(p);
        if pc.z <= 1e-6 {
            return None;
        }
        let k = self.intrinsics();
        Some(ImagePoint {
            u: k[(0, 0)] * pc.x / pc.z + k[(0, 2)],
            v: k[(1, 1)] * pc.y / pc.z + k[(1, 2)],
        })
    }

    /// Ground-plane homography `K [r1 r2 -R c]`.
    pub fn homography(&self) -> Result<Homography, GeometryError> {
        let r = self.rotation();
        let t = -(r * Vector3::from(self.position));
        let mut m = Matrix3::zeros();
        m.set_column(0, &r.column(0));
        m.set_column(1, &r.column(1));
        m.set_column(2, &t);
        Homography::from_matrix(&(self.intrinsics() * m))
    }

    pub fn in_frame(&self, q: ImagePoint) -> bool {
        q.u >= 0.0 && q.v >= 0.0 && q.u < self.width as f64 && q.v < self.height as f64
    }
}
