use std::ffi::CStr;
use std::ptr;

use linemark::geometry::{BevSpec, CameraRig};
use linemark::mask::{Class, SegMask};
use linemark::simulator::{render_frame, NoiseSpec, SceneTemplate};
use linemark_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 256];
    let n = unsafe { lm_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let s = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string();
    assert_eq!(n, s.len());
    s
}

fn rig() -> *mut LmRig {
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { lm_rig_default(&mut r) }, LmStatus::Ok);
    r
}

#[test]
fn homography_round_trip() {
    // Ground square to an arbitrary quadrilateral.
    let g = [-1.0, 2.0, 1.0, 2.0, 1.0, 4.0, -1.0, 4.0];
    let q = [300.0, 800.0, 980.0, 810.0, 760.0, 500.0, 520.0, 495.0];
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(lm_homography_solve(g.as_ptr(), q.as_ptr(), &mut h), LmStatus::Ok);
        for i in 0..4 {
            let (mut u, mut v) = (0.0, 0.0);
            assert_eq!(lm_homography_project(h, g[2 * i], g[2 * i + 1], &mut u, &mut v), LmStatus::Ok);
            assert!((u - q[2 * i]).abs() < 1e-9 && (v - q[2 * i + 1]).abs() < 1e-9);
            let (mut x, mut y) = (0.0, 0.0);
            assert_eq!(lm_homography_ipm(h, u, v, &mut x, &mut y), LmStatus::Ok);
            assert!((x - g[2 * i]).abs() < 1e-9 && (y - g[2 * i + 1]).abs() < 1e-9);
        }
        let mut c = [0.0; 8];
        assert_eq!(lm_homography_coefficients(h, c.as_mut_ptr()), LmStatus::Ok);
        let mut h2 = ptr::null_mut();
        assert_eq!(lm_homography_from_coefficients(c.as_ptr(), &mut h2), LmStatus::Ok);
        let (mut u, mut v) = (0.0, 0.0);
        lm_homography_project(h2, 0.0, 3.0, &mut u, &mut v);
        let (mut u1, mut v1) = (0.0, 0.0);
        lm_homography_project(h, 0.0, 3.0, &mut u1, &mut v1);
        assert_eq!((u, v), (u1, v1));
        lm_homography_free(h);
        lm_homography_free(h2);
    }
}

#[test]
fn errors_are_reported_not_thrown() {
    let g = [0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(lm_homography_solve(g.as_ptr(), g.as_ptr(), &mut h), LmStatus::Geometry);
        assert!(h.is_null());
        assert!(last_error().contains("degenerate"), "{}", last_error());
        assert_eq!(lm_homography_solve(ptr::null(), g.as_ptr(), &mut h), LmStatus::NullPointer);
        assert!(last_error().contains("ground_xy"));
        // A success clears the message.
        assert_eq!(lm_accuracy(0.0017, 0.0169), 1.0 - 0.0017 - 0.0169);
        let r = rig();
        assert_eq!(lm_last_error_message(ptr::null_mut(), 0), 0);
        let missing = c"/nonexistent/rig.toml";
        let mut r2 = ptr::null_mut();
        assert_eq!(lm_rig_load(missing.as_ptr(), &mut r2), LmStatus::Geometry);
        let bad = [1u8; 16];
        let mut n = 0;
        assert_eq!(lm_fit_mask(r, bad.as_ptr(), 4, 4, ptr::null_mut(), 0, &mut n), LmStatus::Mask);
        lm_rig_free(r);
        lm_homography_free(ptr::null_mut());
        lm_rig_free(ptr::null_mut());
        lm_tracker_free(ptr::null_mut());
    }
}

#[test]
fn fit_mask_matches_core() {
    let rig_ptr = rig();
    let (mut rows, mut cols) = (0, 0);
    unsafe { lm_rig_bev_size(rig_ptr, &mut rows, &mut cols) };
    let bev = BevSpec::default();
    assert_eq!((rows, cols), (bev.rows, bev.cols));

    let mut mask = SegMask::new(rows, cols);
    for r in 0..rows {
        for c in [100, 101, 102, 103, 300, 301, 302, 303] {
            mask.set(r, c, Class::Lane);
        }
    }
    let mut out = [LmLine { kind: 0, beta: 0.0, theta: 0.0, phi: 0.0, center_u: 0.0, center_v: 0.0, confidence: 0.0 }; 8];
    let mut n = 0;
    unsafe {
        // Too small a buffer reports the size needed.
        assert_eq!(lm_fit_mask(rig_ptr, mask.as_bytes().as_ptr(), rows, cols, out.as_mut_ptr(), 1, &mut n), LmStatus::BufferTooSmall);
        assert_eq!(n, 2);
        assert_eq!(lm_fit_mask(rig_ptr, mask.as_bytes().as_ptr(), rows, cols, out.as_mut_ptr(), 8, &mut n), LmStatus::Ok);
    }
    assert_eq!(n, 2);
    assert_eq!(out[0].kind, LmKind::Lane as u32);
    assert!((out[0].theta - 101.5).abs() < 1e-9 && out[0].beta.abs() < 1e-12);
    assert!((out[1].theta - 301.5).abs() < 1e-9);
    unsafe { lm_rig_free(rig_ptr) };
}

#[test]
fn boundary_from_boxes_matches_core() {
    let rig_core = CameraRig::default_rig();
    let scene = SceneTemplate::StraightAisle.build(1, 10);
    let frame = render_frame(&scene, 3, &rig_core, &NoiseSpec::zero(), 1).unwrap();
    assert!(!frame.detections.is_empty());
    let boxes: Vec<LmBox> = frame
        .detections
        .iter()
        .map(|d| LmBox { camera: d.camera.index() as u32, u: d.u, v: d.v, w: d.w, h: d.h, score: d.score })
        .collect();
    let expect = linemark::boundary::boundary_landmarks(&frame.detections, &rig_core);

    let r = rig();
    let mut out = vec![LmLine { kind: 0, beta: 0.0, theta: 0.0, phi: 0.0, center_u: 0.0, center_v: 0.0, confidence: 0.0 }; 4];
    let mut n = 0;
    let status = unsafe { lm_boundary_from_boxes(r, boxes.as_ptr(), boxes.len(), out.as_mut_ptr(), out.len(), &mut n) };
    assert_eq!(status, LmStatus::Ok);
    assert_eq!(n, expect.len());
    for (a, b) in out.iter().zip(&expect) {
        assert_eq!(a.kind, LmKind::Boundary as u32);
        assert_eq!((a.beta, a.theta), (b.beta, b.theta));
    }

    let bad = [LmBox { camera: 9, ..boxes[0] }];
    assert_eq!(unsafe { lm_boundary_from_boxes(r, bad.as_ptr(), 1, out.as_mut_ptr(), 4, &mut n) }, LmStatus::InvalidArgument);
    unsafe { lm_rig_free(r) };
}

#[test]
fn tracker_rejects_an_outlier() {
    let r = rig();
    let mut cfg = lm_filter_config_default();
    assert_eq!(cfg.lambda, [1.0, 1.0, 1.0]);
    cfg.sigma_max = 10.0;
    let mut t = ptr::null_mut();
    unsafe { assert_eq!(lm_tracker_new(r, &cfg, &mut t), LmStatus::Ok) };
    let lane = |theta: f64| LmLine {
        kind: LmKind::Lane as u32,
        beta: 0.0,
        theta,
        phi: 0.0,
        center_u: theta,
        center_v: 50.0,
        confidence: 1.0,
    };
    let mut out = [lane(0.0); 4];
    let (mut n, mut rejected) = (0, 0);
    let still = LmPose::default();
    unsafe {
        for _ in 0..5 {
            let det = [lane(200.0)];
            assert_eq!(lm_tracker_step(t, det.as_ptr(), 1, still, out.as_mut_ptr(), 4, &mut n, &mut rejected), LmStatus::Ok);
            assert_eq!((n, rejected), (1, 0));
        }
        // A jump of 25 cells is within the association radius but over sigma_max.
        let det = [lane(225.0)];
        assert_eq!(lm_tracker_step(t, det.as_ptr(), 1, still, out.as_mut_ptr(), 4, &mut n, &mut rejected), LmStatus::Ok);
        assert_eq!(rejected, 1);
        assert!((out[0].theta - 200.0).abs() < 1e-6);
        let mut len = 0;
        lm_tracker_len(t, &mut len);
        assert_eq!(len, 1);

        let bad = [LmLine { kind: 17, ..lane(200.0) }];
        assert_eq!(lm_tracker_step(t, bad.as_ptr(), 1, still, out.as_mut_ptr(), 4, &mut n, ptr::null_mut()), LmStatus::InvalidArgument);
        let nan = LmPose { x: f64::NAN, ..still };
        assert_eq!(lm_tracker_step(t, ptr::null(), 0, nan, out.as_mut_ptr(), 4, &mut n, ptr::null_mut()), LmStatus::InvalidArgument);

        let mut t2 = ptr::null_mut();
        let broken = LmFilterConfig { sigma_max: -1.0, ..cfg };
        assert_eq!(lm_tracker_new(r, &broken, &mut t2), LmStatus::Filter);
        lm_tracker_free(t);
        lm_rig_free(r);
    }
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(lm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
