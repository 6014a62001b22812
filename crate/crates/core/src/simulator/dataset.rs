//! On-disk sequences: what `generate` writes and `run` reads.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::noise::{NoiseSpec, Outlier};
use super::render::{frame_truth, render_frame};
use super::{SceneTemplate, SceneTruth, SimError};
use crate::boundary::DetectionBox;
use crate::geometry::{CameraId, CameraRig, GeometryError, GroundPose};
use crate::landmark::{read_landmarks, write_landmarks, LandmarkCsvError, LineLandmark};
use crate::mask::{MaskError, SegMask};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const RIG_FILE: &str = "rig.toml";
pub const DETECTIONS_FILE: &str = "detections.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const POSES_FILE: &str = "poses.csv";
pub const OUTLIERS_FILE: &str = "outliers.csv";
const MASK_DIR: &str = "masks";
const DATASET_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: content hash does not match the manifest")]
    HashMismatch { path: PathBuf },
    #[error("{path}: unsupported dataset version {version}")]
    Version { path: PathBuf, version: u32 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl DatasetError {
    fn io(path: &Path, e: impl ToString) -> Self {
        DatasetError::Io { path: path.to_path_buf(), message: e.to_string() }
    }

    fn parse(path: &Path, e: impl ToString) -> Self {
        DatasetError::Parse { path: path.to_path_buf(), message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub template: SceneTemplate,
    pub seed: u64,
    pub frames: usize,
    pub rig_file: String,
    pub rig_hash: String,
    pub noise: NoiseSpec,
    pub files: Vec<FileEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub frame: usize,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub dx: f64,
    pub dy: f64,
    pub dyaw: f64,
}

impl PoseRecord {
    pub fn delta(&self) -> GroundPose {
        GroundPose::new(self.dx, self.dy, self.dyaw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct DetectionRecord {
    frame: usize,
    camera: CameraId,
    u: f64,
    v: f64,
    w: f64,
    h: f64,
    score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct OutlierRecord {
    frame: usize,
    offset: f64,
    slope: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn mask_name(frame: usize) -> String {
    format!("{MASK_DIR}/frame_{frame:05}.mask")
}

fn csv_bytes<T: Serialize>(header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

/// Renders every frame of `scene` (seeded by the scene seed) and writes the
/// dataset into `out_dir`. Returns the manifest path.
pub fn export_sequence(
    scene: &SceneTruth,
    rig: &CameraRig,
    noise: &NoiseSpec,
    out_dir: &Path,
) -> Result<PathBuf, DatasetError> {
    noise.validate()?;
    scene.validate()?;
    fs::create_dir_all(out_dir.join(MASK_DIR)).map_err(|e| DatasetError::io(out_dir, e))?;
    let mut files = Vec::new();
    let mut put = |name: String, bytes: &[u8]| -> Result<(), DatasetError> {
        let path = out_dir.join(&name);
        fs::write(&path, bytes).map_err(|e| DatasetError::io(&path, e))?;
        files.push(FileEntry { path: name, sha256: sha256_hex(bytes) });
        Ok(())
    };

    let rig_text = rig.to_calibration().to_toml();
    put(RIG_FILE.to_string(), rig_text.as_bytes())?;

    let mut detections = Vec::new();
    let mut truth = Vec::new();
    let mut poses = Vec::new();
    let mut outliers = Vec::new();
    for frame in 0..scene.frames() {
        let obs = render_frame(scene, frame, rig, noise, scene.seed)?;
        put(mask_name(frame), &obs.mask.encode())?;
        detections.extend(obs.detections.iter().map(|d| DetectionRecord {
            frame,
            camera: d.camera,
            u: d.u,
            v: d.v,
            w: d.w,
            h: d.h,
            score: d.score,
        }));
        if let Some(o) = obs.outlier {
            outliers.push(OutlierRecord { frame, offset: o.offset, slope: o.slope });
        }
        let pose = scene.pose(frame)?;
        let t = scene.trajectory[frame].t;
        let d = obs.ego_delta;
        poses.push(PoseRecord { frame, t, x: pose.x, y: pose.y, yaw: pose.yaw, dx: d.x, dy: d.y, dyaw: d.yaw });
        truth.push(frame_truth(scene, frame, rig)?);
    }

    let csv_err = |name: &str, e: csv::Error| DatasetError::parse(&out_dir.join(name), e);
    let bytes = csv_bytes(&["frame", "camera", "u", "v", "w", "h", "score"], detections)
        .map_err(|e| csv_err(DETECTIONS_FILE, e))?;
    put(DETECTIONS_FILE.to_string(), &bytes)?;
    let bytes = csv_bytes(&["frame", "t", "x", "y", "yaw", "dx", "dy", "dyaw"], poses)
        .map_err(|e| csv_err(POSES_FILE, e))?;
    put(POSES_FILE.to_string(), &bytes)?;
    let bytes = csv_bytes(&["frame", "offset", "slope"], outliers).map_err(|e| csv_err(OUTLIERS_FILE, e))?;
    put(OUTLIERS_FILE.to_string(), &bytes)?;
    let mut bytes = Vec::new();
    write_landmarks(&mut bytes, &truth).map_err(|e| DatasetError::parse(&out_dir.join(TRUTH_FILE), e))?;
    put(TRUTH_FILE.to_string(), &bytes)?;

    let manifest = DatasetManifest {
        version: DATASET_VERSION,
        template: scene.template,
        seed: scene.seed,
        frames: scene.frames(),
        rig_file: RIG_FILE.to_string(),
        rig_hash: sha256_hex(rig_text.as_bytes()),
        noise: *noise,
        files,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let text = toml::to_string(&manifest).map_err(|e| DatasetError::parse(&path, e))?;
    fs::write(&path, text).map_err(|e| DatasetError::io(&path, e))?;
    Ok(path)
}

/// A loaded dataset. Masks stay on disk until requested.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    pub rig: CameraRig,
    pub poses: Vec<PoseRecord>,
    pub detections: Vec<Vec<DetectionBox>>,
    pub truth: Vec<Vec<LineLandmark>>,
    pub outliers: Vec<Option<Outlier>>,
}

impl Dataset {
    pub fn frames(&self) -> usize {
        self.manifest.frames
    }

    pub fn mask_path(&self, frame: usize) -> PathBuf {
        self.dir.join(mask_name(frame))
    }

    /// Mask bytes of a frame, verified against the manifest hash.
    pub fn read_mask_bytes(&self, frame: usize) -> Result<Vec<u8>, DatasetError> {
        let name = mask_name(frame);
        let path = self.dir.join(&name);
        let bytes = fs::read(&path).map_err(|e| DatasetError::io(&path, e))?;
        let entry = self.manifest.files.iter().find(|f| f.path == name);
        match entry {
            Some(f) if f.sha256 == sha256_hex(&bytes) => Ok(bytes),
            _ => Err(DatasetError::HashMismatch { path }),
        }
    }

    pub fn mask(&self, frame: usize) -> Result<SegMask, DatasetError> {
        let bytes = self.read_mask_bytes(frame)?;
        let mask = SegMask::decode(&bytes, &self.mask_path(frame).display().to_string())?;
        mask.check_dims(self.rig.bev.rows, self.rig.bev.cols)?;
        Ok(mask)
    }
}

fn read_verified(dir: &Path, manifest: &DatasetManifest, name: &str) -> Result<Vec<u8>, DatasetError> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|e| DatasetError::io(&path, e))?;
    match manifest.files.iter().find(|f| f.path == name) {
        Some(f) if f.sha256 == sha256_hex(&bytes) => Ok(bytes),
        _ => Err(DatasetError::HashMismatch { path }),
    }
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path, bytes: &[u8]) -> Result<Vec<T>, DatasetError> {
    csv::Reader::from_reader(bytes)
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| DatasetError::parse(path, e))
}

fn check_frame(path: &Path, frame: usize, frames: usize) -> Result<(), DatasetError> {
    if frame >= frames {
        return Err(DatasetError::parse(path, format!("frame {frame} beyond the {frames} declared frames")));
    }
    Ok(())
}

/// Reads and verifies a dataset directory. Every non-mask file is checked
/// against its manifest hash here; masks are checked when read.
pub fn load_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| DatasetError::io(&mpath, e))?;
    let manifest: DatasetManifest = toml::from_str(&text).map_err(|e| DatasetError::parse(&mpath, e))?;
    if manifest.version != DATASET_VERSION {
        return Err(DatasetError::Version { path: mpath, version: manifest.version });
    }
    let frames = manifest.frames;

    let rig_bytes = read_verified(dir, &manifest, &manifest.rig_file)?;
    if sha256_hex(&rig_bytes) != manifest.rig_hash {
        return Err(DatasetError::HashMismatch { path: dir.join(&manifest.rig_file) });
    }
    let rig = CameraRig::load(&dir.join(&manifest.rig_file))?;

    let path = dir.join(POSES_FILE);
    let poses: Vec<PoseRecord> = read_csv(&path, &read_verified(dir, &manifest, POSES_FILE)?)?;
    if poses.len() != frames || poses.iter().enumerate().any(|(i, p)| p.frame != i) {
        return Err(DatasetError::parse(&path, "expected exactly one pose per frame, in order"));
    }

    let path = dir.join(DETECTIONS_FILE);
    let mut detections = vec![Vec::new(); frames];
    for r in read_csv::<DetectionRecord>(&path, &read_verified(dir, &manifest, DETECTIONS_FILE)?)? {
        check_frame(&path, r.frame, frames)?;
        detections[r.frame].push(DetectionBox { camera: r.camera, u: r.u, v: r.v, w: r.w, h: r.h, score: r.score });
    }

    let path = dir.join(OUTLIERS_FILE);
    let mut outliers = vec![None; frames];
    for r in read_csv::<OutlierRecord>(&path, &read_verified(dir, &manifest, OUTLIERS_FILE)?)? {
        check_frame(&path, r.frame, frames)?;
        outliers[r.frame] = Some(Outlier { offset: r.offset, slope: r.slope });
    }

    let path = dir.join(TRUTH_FILE);
    let bytes = read_verified(dir, &manifest, TRUTH_FILE)?;
    let truth = read_landmarks(bytes.as_slice(), frames).map_err(|e: LandmarkCsvError| DatasetError::parse(&path, e))?;
    if truth.len() != frames {
        return Err(DatasetError::parse(&path, format!("rows reference frames beyond {frames}")));
    }

    Ok(Dataset { dir: dir.to_path_buf(), manifest, rig, poses, detections, truth, outliers })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn export_and_reload_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let scene = SceneTemplate::StraightAisle.build(2, 6);
        let rig = CameraRig::default_rig();
        let noise = NoiseSpec { outlier_rate: 1.0, ..NoiseSpec::default() };
        let manifest = export_sequence(&scene, &rig, &noise, dir.path()).unwrap();
        assert!(manifest.ends_with(MANIFEST_FILE));
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.frames(), 6);
        assert_eq!(ds.rig, rig);
        for frame in 0..6 {
            let obs = render_frame(&scene, frame, &rig, &noise, scene.seed).unwrap();
            assert_eq!(ds.mask(frame).unwrap(), obs.mask);
            assert_eq!(ds.detections[frame], obs.detections);
            assert_eq!(ds.outliers[frame], obs.outlier);
            assert_eq!(ds.poses[frame].delta(), obs.ego_delta);
            assert_eq!(ds.truth[frame], frame_truth(&scene, frame, &rig).unwrap());
        }
    }

    #[test]
    fn tampered_file_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let scene = SceneTemplate::StaticAisle.build(0, 2);
        export_sequence(&scene, &CameraRig::default_rig(), &NoiseSpec::zero(), dir.path()).unwrap();
        let p = dir.path().join(DETECTIONS_FILE);
        let mut text = fs::read_to_string(&p).unwrap();
        text.push('\n');
        fs::write(&p, text).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(DatasetError::HashMismatch { .. })));
    }

    #[test]
    fn empty_sequence() {
        let dir = tempfile::tempdir().unwrap();
        let scene = SceneTemplate::StraightAisle.build(0, 0);
        export_sequence(&scene, &CameraRig::default_rig(), &NoiseSpec::default(), dir.path()).unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.frames(), 0);
        assert!(ds.truth.is_empty());
    }
}
