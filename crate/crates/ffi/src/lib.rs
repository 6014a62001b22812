//! C ABI over the linemark core.
//!
//! Every fallible call returns an [`LmStatus`]. On failure the message is kept
//! per thread and can be copied out with [`lm_last_error_message`]. Objects
//! are opaque handles created by `*_new`/`*_solve`/`*_load` calls and released
//! with the matching `*_free`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use thiserror::Error;

use linemark::boundary::{boundary_landmarks, DetectionBox};
use linemark::filter::{FilterConfig, FilterError, Tracker};
use linemark::geometry::{
    solve_homography, CameraId, CameraRig, GeometryError, GroundPoint, GroundPose, Homography, ImagePoint,
};
use linemark::landmark::{LandmarkKind, LineLandmark};
use linemark::linefit::{fit_frame, LineFitParams};
use linemark::mask::{MaskError, SegMask};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Geometry = 3,
    Mask = 4,
    Filter = 5,
    /// The output buffer was too small; the required length was written.
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmKind {
    Lane = 0,
    Parking = 1,
    Median = 2,
    Boundary = 3,
}

/// A line `u = beta * v + theta` in BEV cell coordinates. `kind` holds an
/// [`LmKind`] value.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmLine {
    pub kind: u32,
    pub beta: f64,
    pub theta: f64,
    pub phi: f64,
    pub center_u: f64,
    pub center_v: f64,
    pub confidence: f64,
}

/// Vehicle detection box; `camera` is 0 front, 1 rear, 2 left, 3 right.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmBox {
    pub camera: u32,
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

/// Ego motion between two frames, meters and radians.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LmPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

/// The tunable subset of the temporal filter.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmFilterConfig {
    pub lambda: [f64; 3],
    pub sigma_max: f64,
    pub max_misses: u32,
    pub association_radius: f64,
    pub gate_only: bool,
    pub filter_boundary: bool,
}

pub struct LmHomography(Homography);

pub struct LmRig(CameraRig);

pub struct LmTracker(Tracker);

#[derive(Debug, Error)]
enum FfiError {
    #[error("null pointer passed as `{0}`")]
    Null(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("output buffer holds {capacity} lines, {needed} needed")]
    BufferTooSmall { capacity: usize, needed: usize },
}

impl FfiError {
    fn status(&self) -> LmStatus {
        match self {
            FfiError::Null(_) => LmStatus::NullPointer,
            FfiError::Invalid(_) => LmStatus::InvalidArgument,
            FfiError::Geometry(_) => LmStatus::Geometry,
            FfiError::Mask(_) => LmStatus::Mask,
            FfiError::Filter(_) => LmStatus::Filter,
            FfiError::BufferTooSmall { .. } => LmStatus::BufferTooSmall,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<String>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn guard(f: impl FnOnce() -> Result<(), FfiError>) -> LmStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LmStatus::Ok,
        Ok(Err(e)) => {
            set_error(e.to_string());
            e.status()
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            LmStatus::Panic
        }
    }
}

fn deref<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, FfiError> {
    // SAFETY: callers pass either null or a pointer obtained from this library.
    unsafe { p.as_ref() }.ok_or(FfiError::Null(name))
}

fn deref_mut<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, FfiError> {
    // SAFETY: as above, and the caller owns the handle exclusively.
    unsafe { p.as_mut() }.ok_or(FfiError::Null(name))
}

fn slice<'a, T>(p: *const T, len: usize, name: &'static str) -> Result<&'a [T], FfiError> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(FfiError::Null(name));
    }
    // SAFETY: the caller guarantees `len` readable elements at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn write<T>(out: *mut T, v: T, name: &'static str) -> Result<(), FfiError> {
    *deref_mut(out, name)? = v;
    Ok(())
}

fn write_lines(lines: &[LineLandmark], out: *mut LmLine, cap: usize, n_out: *mut usize) -> Result<(), FfiError> {
    write(n_out, lines.len(), "n_out")?;
    if lines.len() > cap {
        return Err(FfiError::BufferTooSmall { capacity: cap, needed: lines.len() });
    }
    if lines.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(FfiError::Null("out"));
    }
    for (i, l) in lines.iter().enumerate() {
        // SAFETY: the caller guarantees `cap` writable elements at `out`.
        unsafe { out.add(i).write(LmLine::from(l)) };
    }
    Ok(())
}

impl From<LandmarkKind> for LmKind {
    fn from(k: LandmarkKind) -> Self {
        match k {
            LandmarkKind::Lane => LmKind::Lane,
            LandmarkKind::Parking => LmKind::Parking,
            LandmarkKind::Median => LmKind::Median,
            LandmarkKind::Boundary => LmKind::Boundary,
        }
    }
}

fn kind_from_raw(k: u32) -> Result<LandmarkKind, FfiError> {
    LandmarkKind::ALL.get(k as usize).copied().ok_or_else(|| FfiError::Invalid(format!("landmark kind {k} out of range")))
}

impl From<&LineLandmark> for LmLine {
    fn from(l: &LineLandmark) -> Self {
        LmLine {
            kind: LmKind::from(l.kind) as u32,
            beta: l.beta,
            theta: l.theta,
            phi: l.phi,
            center_u: l.center[0],
            center_v: l.center[1],
            confidence: l.confidence,
        }
    }
}

fn to_landmark(l: &LmLine) -> Result<LineLandmark, FfiError> {
    let lm = LineLandmark::new(kind_from_raw(l.kind)?, l.beta, l.theta, [l.center_u, l.center_v], l.confidence);
    if ![lm.beta, lm.theta, lm.center[0], lm.center[1]].iter().all(|x| x.is_finite()) {
        return Err(FfiError::Invalid("non-finite detection".into()));
    }
    Ok(lm)
}

impl From<FilterConfig> for LmFilterConfig {
    fn from(c: FilterConfig) -> Self {
        LmFilterConfig {
            lambda: c.lambda,
            sigma_max: c.sigma_max,
            max_misses: c.max_misses,
            association_radius: c.association_radius,
            gate_only: c.gate_only,
            filter_boundary: c.filter_boundary,
        }
    }
}

impl From<&LmFilterConfig> for FilterConfig {
    fn from(c: &LmFilterConfig) -> Self {
        FilterConfig {
            lambda: c.lambda,
            sigma_max: c.sigma_max,
            max_misses: c.max_misses,
            association_radius: c.association_radius,
            gate_only: c.gate_only,
            filter_boundary: c.filter_boundary,
            ..FilterConfig::default()
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`) and returns the full message length without the NUL.
/// Returns 0 when the last call succeeded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn lm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_deref() else { return 0 };
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// `1 - md - fd`.
#[no_mangle]
pub extern "C" fn lm_accuracy(md: f64, fd: f64) -> f64 {
    linemark::eval::accuracy(md, fd)
}

/// Solves the ground-to-image homography through four correspondences.
/// `ground_xy` and `image_uv` each hold four interleaved pairs.
///
/// # Safety
/// `ground_xy` and `image_uv` must point to 8 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lm_homography_solve(
    ground_xy: *const f64,
    image_uv: *const f64,
    out: *mut *mut LmHomography,
) -> LmStatus {
    guard(|| {
        let g = slice(ground_xy, 8, "ground_xy")?;
        let q = slice(image_uv, 8, "image_uv")?;
        let pairs: [(GroundPoint, ImagePoint); 4] = std::array::from_fn(|i| {
            (GroundPoint::new(g[2 * i], g[2 * i + 1]), ImagePoint::new(q[2 * i], q[2 * i + 1]))
        });
        let h = solve_homography(&pairs)?;
        write(out, Box::into_raw(Box::new(LmHomography(h))), "out")
    })
}

/// Builds a homography from its 8 coefficients (row-major, `h33 = 1`).
///
/// # Safety
/// `coeffs` must point to 8 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lm_homography_from_coefficients(
    coeffs: *const f64,
    out: *mut *mut LmHomography,
) -> LmStatus {
    guard(|| {
        let c: [f64; 8] = slice(coeffs, 8, "coeffs")?.try_into().expect("length 8");
        let h = Homography::from_coefficients(c)?;
        write(out, Box::into_raw(Box::new(LmHomography(h))), "out")
    })
}

/// # Safety
/// `h` must be a live handle; `out` must point to 8 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lm_homography_coefficients(h: *const LmHomography, out: *mut f64) -> LmStatus {
    guard(|| {
        let c = deref(h, "h")?.0.coefficients();
        if out.is_null() {
            return Err(FfiError::Null("out"));
        }
        std::ptr::copy_nonoverlapping(c.as_ptr(), out, 8);
        Ok(())
    })
}

/// Ground point to pixel.
///
/// # Safety
/// `h` must be a live handle; `u` and `v` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lm_homography_project(
    h: *const LmHomography,
    x: f64,
    y: f64,
    u: *mut f64,
    v: *mut f64,
) -> LmStatus {
    guard(|| {
        let q = deref(h, "h")?.0.project(GroundPoint::new(x, y))?;
        write(u, q.u, "u")?;
        write(v, q.v, "v")
    })
}

/// Pixel to ground point. Fails outside the default working area.
///
/// # Safety
/// `h` must be a live handle; `x` and `y` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lm_homography_ipm(
    h: *const LmHomography,
    u: f64,
    v: f64,
    x: *mut f64,
    y: *mut f64,
) -> LmStatus {
    guard(|| {
        let p = deref(h, "h")?.0.ipm_to_ground(ImagePoint::new(u, v))?;
        write(x, p.x, "x")?;
        write(y, p.y, "y")
    })
}

/// # Safety
/// `h` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lm_homography_free(h: *mut LmHomography) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// The built-in four-camera rig.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lm_rig_default(out: *mut *mut LmRig) -> LmStatus {
    guard(|| write(out, Box::into_raw(Box::new(LmRig(CameraRig::default_rig()))), "out"))
}

/// Loads a rig from a calibration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lm_rig_load(path: *const c_char, out: *mut *mut LmRig) -> LmStatus {
    guard(|| {
        if path.is_null() {
            return Err(FfiError::Null("path"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|e| FfiError::Invalid(format!("path: {e}")))?;
        let rig = CameraRig::load(Path::new(path))?;
        write(out, Box::into_raw(Box::new(LmRig(rig))), "out")
    })
}

/// BEV raster size of the rig.
///
/// # Safety
/// `rig` must be a live handle; `rows` and `cols` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lm_rig_bev_size(rig: *const LmRig, rows: *mut usize, cols: *mut usize) -> LmStatus {
    guard(|| {
        let bev = deref(rig, "rig")?.0.bev;
        write(rows, bev.rows, "rows")?;
        write(cols, bev.cols, "cols")
    })
}

/// # Safety
/// `rig` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lm_rig_free(rig: *mut LmRig) {
    if !rig.is_null() {
        drop(Box::from_raw(rig));
    }
}

/// Fits lane, median and parking lines in a BEV class mask (one byte per
/// cell, row-major, sized to the rig's raster). Classes without a usable fit
/// are skipped. On return `n_out` holds the number of lines found; if it
/// exceeds `cap`, nothing is written and `BufferTooSmall` is returned.
///
/// # Safety
/// `cells` must point to `rows * cols` bytes and `out` to `cap` writable lines.
#[no_mangle]
pub unsafe extern "C" fn lm_fit_mask(
    rig: *const LmRig,
    cells: *const u8,
    rows: usize,
    cols: usize,
    out: *mut LmLine,
    cap: usize,
    n_out: *mut usize,
) -> LmStatus {
    guard(|| {
        let bev = deref(rig, "rig")?.0.bev;
        let len = rows.checked_mul(cols).ok_or_else(|| FfiError::Invalid("mask size overflows".into()))?;
        let mask = SegMask::from_bytes(rows, cols, slice(cells, len, "cells")?.to_vec())?;
        mask.check_dims(bev.rows, bev.cols)?;
        let (lines, _) = fit_frame(&mask, &LineFitParams::default(), &bev);
        write_lines(&lines, out, cap, n_out)
    })
}

/// Boundary lines from one frame of vehicle detection boxes.
///
/// # Safety
/// `boxes` must point to `n` boxes and `out` to `cap` writable lines.
#[no_mangle]
pub unsafe extern "C" fn lm_boundary_from_boxes(
    rig: *const LmRig,
    boxes: *const LmBox,
    n: usize,
    out: *mut LmLine,
    cap: usize,
    n_out: *mut usize,
) -> LmStatus {
    guard(|| {
        let rig = &deref(rig, "rig")?.0;
        let dets = slice(boxes, n, "boxes")?
            .iter()
            .map(|b| {
                let camera = CameraId::from_index(b.camera as usize)
                    .ok_or_else(|| FfiError::Invalid(format!("camera index {} out of range", b.camera)))?;
                Ok(DetectionBox { camera, u: b.u, v: b.v, w: b.w, h: b.h, score: b.score })
            })
            .collect::<Result<Vec<_>, FfiError>>()?;
        write_lines(&boundary_landmarks(&dets, rig), out, cap, n_out)
    })
}

/// Default filter settings.
#[no_mangle]
pub extern "C" fn lm_filter_config_default() -> LmFilterConfig {
    FilterConfig::default().into()
}

/// Creates a tracker on the rig's BEV raster. `cfg` may be null for defaults.
///
/// # Safety
/// `rig` must be a live handle; `cfg` null or valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lm_tracker_new(
    rig: *const LmRig,
    cfg: *const LmFilterConfig,
    out: *mut *mut LmTracker,
) -> LmStatus {
    guard(|| {
        let bev = deref(rig, "rig")?.0.bev;
        let cfg = cfg.as_ref().map(FilterConfig::from).unwrap_or_default();
        let t = Tracker::new(cfg, bev)?;
        write(out, Box::into_raw(Box::new(LmTracker(t))), "out")
    })
}

/// Runs one frame: predicts tracks through `ego_delta`, gates and fuses the
/// detections, and writes the emitted landmarks. `n_rejected` may be null.
/// If more than `cap` landmarks are emitted, the step still happens, `n_out`
/// holds the count and `BufferTooSmall` is returned.
///
/// # Safety
/// `tracker` must be a live handle, `dets` must point to `n` lines and `out`
/// to `cap` writable lines.
#[no_mangle]
pub unsafe extern "C" fn lm_tracker_step(
    tracker: *mut LmTracker,
    dets: *const LmLine,
    n: usize,
    ego_delta: LmPose,
    out: *mut LmLine,
    cap: usize,
    n_out: *mut usize,
    n_rejected: *mut usize,
) -> LmStatus {
    guard(|| {
        let t = deref_mut(tracker, "tracker")?;
        let dets = slice(dets, n, "dets")?.iter().map(to_landmark).collect::<Result<Vec<_>, _>>()?;
        let delta = GroundPose::new(ego_delta.x, ego_delta.y, ego_delta.yaw);
        if !delta.is_finite() {
            return Err(FfiError::Invalid("non-finite ego motion".into()));
        }
        let step = t.0.step(&dets, &delta);
        if !n_rejected.is_null() {
            *n_rejected = step.rejected.len();
        }
        write_lines(&step.emitted, out, cap, n_out)
    })
}

/// Number of live tracks.
///
/// # Safety
/// `tracker` must be a live handle; `n` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lm_tracker_len(tracker: *const LmTracker, n: *mut usize) -> LmStatus {
    guard(|| write(n, deref(tracker, "tracker")?.0.tracks().len(), "n"))
}

/// # Safety
/// `tracker` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lm_tracker_free(tracker: *mut LmTracker) {
    if !tracker.is_null() {
        drop(Box::from_raw(tracker));
    }
}
