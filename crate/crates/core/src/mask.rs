//! Class-label rasters and their on-disk format.
//!
//! A mask file is a 16-byte header followed by `rows * cols` class bytes in
//! row-major order:
//!
//! | offset | size | content                 |
//! |--------|------|-------------------------|
//! | 0      | 8    | magic `LMKMASK1`        |
//! | 8      | 4    | rows, little-endian u32 |
//! | 12     | 4    | cols, little-endian u32 |

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MASK_MAGIC: &[u8; 8] = b"LMKMASK1";
pub const MASK_HEADER_LEN: usize = 16;

/// Segmentation classes. The discriminant is the on-disk byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Class {
    Background = 0,
    Lane = 1,
    Parking = 2,
    Median = 3,
}

impl Class {
    pub const FOREGROUND: [Class; 3] = [Class::Lane, Class::Parking, Class::Median];

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Class::Background),
            1 => Some(Class::Lane),
            2 => Some(Class::Parking),
            3 => Some(Class::Median),
            _ => None,
        }
    }

    pub fn byte(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Class::Background => "background",
            Class::Lane => "lane",
            Class::Parking => "parking",
            Class::Median => "median",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}: bad mask header")]
    BadHeader(String),
    #[error("{path}: expected {expected} payload bytes, found {found}")]
    Truncated { path: String, expected: usize, found: usize },
    #[error("{path}: invalid class byte {byte} at offset {offset}")]
    BadLabel { path: String, byte: u8, offset: usize },
    #[error("mask is {found_rows}x{found_cols}, expected {rows}x{cols}")]
    DimensionMismatch { rows: usize, cols: usize, found_rows: usize, found_cols: usize },
}

/// Row-major grid of class labels. Used both for the BEV raster and for
/// per-camera label images.
#[derive(Clone, PartialEq, Eq)]
pub struct SegMask {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl fmt::Debug for SegMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SegMask")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("foreground", &self.foreground_count())
            .finish()
    }
}

impl SegMask {
    pub fn new(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "mask dimensions must be positive");
        Self { rows, cols, data: vec![0; rows * cols] }
    }

    /// Wraps raw class bytes, validating every label.
    pub fn from_bytes(rows: usize, cols: usize, data: Vec<u8>) -> Result<Self, MaskError> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(MaskError::Truncated {
                path: "<memory>".into(),
                expected: rows * cols,
                found: data.len(),
            });
        }
        if let Some(offset) = data.iter().position(|b| *b > 3) {
            return Err(MaskError::BadLabel { path: "<memory>".into(), byte: data[offset], offset });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Class {
        Class::from_byte(self.data[row * self.cols + col]).expect("validated label")
    }

    pub fn byte(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, class: Class) {
        self.data[row * self.cols + col] = class.byte();
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|b| **b != 0).count()
    }

    pub fn count(&self, class: Class) -> usize {
        self.data.iter().filter(|b| **b == class.byte()).count()
    }

    pub fn is_background(&self) -> bool {
        self.data.iter().all(|b| *b == 0)
    }

    /// Copy shifted right by `k` columns (left for negative `k`), filling
    /// with background.
    pub fn shifted_cols(&self, k: isize) -> Self {
        let mut out = Self::new(self.rows, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let src = c as isize - k;
                if src >= 0 && (src as usize) < self.cols {
                    out.data[r * self.cols + c] = self.data[r * self.cols + src as usize];
                }
            }
        }
        out
    }

    pub fn check_dims(&self, rows: usize, cols: usize) -> Result<(), MaskError> {
        if self.rows != rows || self.cols != cols {
            return Err(MaskError::DimensionMismatch {
                rows,
                cols,
                found_rows: self.rows,
                found_cols: self.cols,
            });
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(MASK_HEADER_LEN + self.data.len());
        out.extend_from_slice(MASK_MAGIC);
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        out.extend_from_slice(&self.data);
        out
    }

    pub fn decode(bytes: &[u8], origin: &str) -> Result<Self, MaskError> {
        if bytes.len() < MASK_HEADER_LEN || &bytes[..8] != MASK_MAGIC {
            return Err(MaskError::BadHeader(origin.to_string()));
        }
        let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        if rows == 0 || cols == 0 {
            return Err(MaskError::BadHeader(origin.to_string()));
        }
        let payload = &bytes[MASK_HEADER_LEN..];
        if payload.len() != rows * cols {
            return Err(MaskError::Truncated {
                path: origin.to_string(),
                expected: rows * cols,
                found: payload.len(),
            });
        }
        Self::from_bytes(rows, cols, payload.to_vec()).map_err(|e| match e {
            MaskError::BadLabel { byte, offset, .. } => {
                MaskError::BadLabel { path: origin.to_string(), byte, offset }
            }
            other => other,
        })
    }

    pub fn read(path: &Path) -> Result<Self, MaskError> {
        let bytes = std::fs::read(path)
            .map_err(|source| MaskError::Io { path: path.display().to_string(), source })?;
        Self::decode(&bytes, &path.display().to_string())
    }

    pub fn write(&self, path: &Path) -> Result<(), MaskError> {
        std::fs::write(path, self.encode())
            .map_err(|source| MaskError::Io { path: path.display().to_string(), source })
    }
}
