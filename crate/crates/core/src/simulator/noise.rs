use serde::{Deserialize, Serialize};

use super::SimError;

/// Corruptions applied to rendered observations, standing in for the errors
/// of a trained segmentation and detection network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Probability of clearing each foreground cell.
    pub p_drop: f64,
    /// Per-class dilation radius in cells.
    pub dilate: usize,
    /// Erosion radius in cells.
    pub erode: usize,
    /// False foreground cells per frame.
    pub speckle: usize,
    /// Background rectangles per frame.
    pub occlusions: usize,
    /// Maximum occlusion side, cells.
    pub occlusion_size: usize,
    /// Keypoint and box-size jitter, pixels.
    pub jitter_px: f64,
    /// Probability of dropping each true detection.
    pub miss_prob: f64,
    /// Probability of one false box per camera per frame.
    pub fp_rate: f64,
    /// Fraction of frames whose lane and median stripes are displaced.
    pub outlier_rate: f64,
    /// Lateral displacement of outlier stripes, cells.
    pub outlier_offset: f64,
    /// Extra slope of outlier stripes.
    pub outlier_slope: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            p_drop: 0.05,
            dilate: 0,
            erode: 0,
            speckle: 150,
            occlusions: 1,
            occlusion_size: 40,
            jitter_px: 1.0,
            miss_prob: 0.02,
            fp_rate: 0.01,
            outlier_rate: 0.0,
            outlier_offset: 15.0,
            outlier_slope: 0.02,
        }
    }
}

/// First frames never carry injected outliers so trackers can settle.
pub const OUTLIER_WARMUP: usize = 10;

impl NoiseSpec {
    pub fn zero() -> Self {
        Self {
            p_drop: 0.0,
            dilate: 0,
            erode: 0,
            speckle: 0,
            occlusions: 0,
            occlusion_size: 0,
            jitter_px: 0.0,
            miss_prob: 0.0,
            fp_rate: 0.0,
            outlier_rate: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, p) in [
            ("p_drop", self.p_drop),
            ("miss_prob", self.miss_prob),
            ("fp_rate", self.fp_rate),
            ("outlier_rate", self.outlier_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::InvalidNoise(format!("{name} = {p} is not a probability")));
            }
        }
        if !(self.jitter_px >= 0.0 && self.jitter_px.is_finite()) {
            return Err(SimError::InvalidNoise("jitter_px must be finite and nonnegative".into()));
        }
        if !self.outlier_offset.is_finite() || !self.outlier_slope.is_finite() {
            return Err(SimError::InvalidNoise("outlier displacement must be finite".into()));
        }
        Ok(())
    }
}

/// Displacement applied to a frame's lane and median stripes: in BEV cells,
/// `u -> u + offset + slope * v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outlier {
    pub offset: f64,
    pub slope: f64,
}
