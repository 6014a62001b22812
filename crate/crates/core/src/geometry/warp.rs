use super::{CameraId, CameraRig};
use crate::mask::SegMask;

/// Stitches four per-camera label images into the BEV raster.
///
/// Each BEV cell center is mapped into the cameras in priority order
/// (front, rear, left, right); the first camera that owns and sees the point
/// supplies the nearest-neighbor label. Cells no camera sees stay background.
pub fn warp_to_bev(rig: &CameraRig, images: &[SegMask; 4]) -> SegMask {
    let bev = &rig.bev;
    let mut out = SegMask::new(bev.rows, bev.cols);
    for row in 0..bev.rows {
        for col in 0..bev.cols {
            let g = bev.cell_to_ground(row as f64, col as f64);
            for id in CameraId::ALL {
                let cam = rig.camera(id);
                let image = &images[id.index()];
                let Some((r, c)) = cam.sees(g) else { continue };
                if r < image.rows() && c < image.cols() {
                    out.set(row, col, image.get(r, c));
                    break;
                }
            }
        }
    }
    out
}
