//! Vectorized line landmarks and the per-frame landmark CSV.
//!
//! Landmarks live in BEV cell coordinates `(u, v)`: `u` is the raster column
//! and `v` counts cells forward from the ego row. A line is `u = beta * v +
//! theta`, so `theta` is the column where the line crosses the ego row and
//! `phi = atan(beta)` is its angle to the ego longitudinal axis.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::Class;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LandmarkKind {
    Lane,
    Parking,
    Median,
    Boundary,
}

impl LandmarkKind {
    pub const ALL: [LandmarkKind; 4] =
        [LandmarkKind::Lane, LandmarkKind::Parking, LandmarkKind::Median, LandmarkKind::Boundary];

    pub fn as_str(self) -> &'static str {
        match self {
            LandmarkKind::Lane => "lane",
            LandmarkKind::Parking => "parking",
            LandmarkKind::Median => "median",
            LandmarkKind::Boundary => "boundary",
        }
    }

    pub fn from_class(class: Class) -> Option<Self> {
        match class {
            Class::Lane => Some(LandmarkKind::Lane),
            Class::Parking => Some(LandmarkKind::Parking),
            Class::Median => Some(LandmarkKind::Median),
            Class::Background => None,
        }
    }
}

impl fmt::Display for LandmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LandmarkKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lane" => Ok(LandmarkKind::Lane),
            "parking" => Ok(LandmarkKind::Parking),
            "median" => Ok(LandmarkKind::Median),
            "boundary" => Ok(LandmarkKind::Boundary),
            other => Err(format!("unknown landmark kind '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineLandmark {
    pub kind: LandmarkKind,
    /// Lateral cells per longitudinal cell.
    pub beta: f64,
    /// Column at the ego row.
    pub theta: f64,
    /// Angle to the ego longitudinal axis, `atan(beta)`.
    pub phi: f64,
    /// Segment center `(u, v)`.
    pub center: [f64; 2],
    pub confidence: f64,
}

impl LineLandmark {
    pub fn new(kind: LandmarkKind, beta: f64, theta: f64, center: [f64; 2], confidence: f64) -> Self {
        Self { kind, beta, theta, phi: beta.atan(), center, confidence }
    }

    /// Column of the line at longitudinal offset `v`.
    pub fn u_at(&self, v: f64) -> f64 {
        self.beta * v + self.theta
    }

    pub fn is_valid(&self) -> bool {
        self.beta.is_finite()
            && self.theta.is_finite()
            && self.center.iter().all(|c| c.is_finite())
            && self.phi.abs() < std::f64::consts::FRAC_PI_2
            && (0.0..=1.0).contains(&self.confidence)
    }
}

/// One row of the landmark CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkRecord {
    pub frame: usize,
    pub kind: LandmarkKind,
    pub beta: f64,
    pub theta: f64,
    pub phi: f64,
    pub cx: f64,
    pub cy: f64,
    pub confidence: f64,
}

impl LandmarkRecord {
    pub fn new(frame: usize, lm: &LineLandmark) -> Self {
        Self {
            frame,
            kind: lm.kind,
            beta: lm.beta,
            theta: lm.theta,
            phi: lm.phi,
            cx: lm.center[0],
            cy: lm.center[1],
            confidence: lm.confidence,
        }
    }

    pub fn landmark(&self) -> LineLandmark {
        LineLandmark {
            kind: self.kind,
            beta: self.beta,
            theta: self.theta,
            phi: self.phi,
            center: [self.cx, self.cy],
            confidence: self.confidence,
        }
    }
}

#[derive(Debug, Error)]
pub enum LandmarkCsvError {
    #[error("landmark CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("landmark CSV: frame {frame} appears after frame {previous}")]
    Unordered { frame: usize, previous: usize },
}

/// Writes `frame,kind,beta,theta,phi,cx,cy,confidence`. Floats use Rust's
/// shortest round-trip formatting, so reading back is bit-exact.
pub fn write_landmarks<W: Write>(
    out: W,
    frames: &[Vec<LineLandmark>],
) -> Result<(), LandmarkCsvError> {
    let mut w = csv::Writer::from_writer(out);
    for (frame, lms) in frames.iter().enumerate() {
        for lm in lms {
            w.serialize(LandmarkRecord::new(frame, lm))?;
        }
    }
    if frames.iter().all(|f| f.is_empty()) {
        w.write_record(["frame", "kind", "beta", "theta", "phi", "cx", "cy", "confidence"])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads a landmark CSV into per-frame lists covering frames `0..frames`.
/// Rows must be sorted by frame.
pub fn read_landmarks<R: Read>(
    input: R,
    frames: usize,
) -> Result<Vec<Vec<LineLandmark>>, LandmarkCsvError> {
    let mut out = vec![Vec::new(); frames];
    let mut r = csv::Reader::from_reader(input);
    let mut previous = 0usize;
    for rec in r.deserialize::<LandmarkRecord>() {
        let rec = rec?;
        if rec.frame < previous {
            return Err(LandmarkCsvError::Unordered { frame: rec.frame, previous });
        }
        previous = rec.frame;
        if rec.frame >= out.len() {
            out.resize(rec.frame + 1, Vec::new());
        }
        out[rec.frame].push(rec.landmark());
    }
    Ok(out)
}
