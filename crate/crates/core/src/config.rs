//! Pipeline configuration file.
//!
//! ```toml
//! version = 1
//! rig = "rig.toml"          # optional; the built-in surround rig otherwise
//! output = "out"            # optional
//!
//! [scene]
//! template = "straight_aisle"
//! seed = 0
//! frames = 400
//!
//! [noise]      # simulator corruption, see NoiseSpec
//! [linefit]    # interval, run_cap, min_samples, min_run, max_gap
//! [filter]     # lambda, sigma_max, noise diagonals, max_misses, ...
//! [match]      # theta_tol, beta_tol, boundary_tol
//! [pipeline]   # enable_filter
//! ```
//!
//! Unknown keys anywhere are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::MatchSpec;
use crate::filter::FilterConfig;
use crate::geometry::CameraRig;
use crate::linefit::LineFitParams;
use crate::simulator::{NoiseSpec, SceneTemplate, DEFAULT_FRAMES};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("unsupported config version {0} (expected {CONFIG_VERSION})")]
    Version(u32),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub template: SceneTemplate,
    pub seed: u64,
    pub frames: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self { template: SceneTemplate::StraightAisle, seed: 0, frames: DEFAULT_FRAMES }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineOptions {
    /// Emit filtered landmarks; when off the raw per-frame fits are final.
    pub enable_filter: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self { enable_filter: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rig: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub scene: SceneConfig,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub linefit: LineFitParams,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default, rename = "match")]
    pub matching: MatchSpec,
    #[serde(default)]
    pub pipeline: PipelineOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            rig: None,
            output: None,
            scene: SceneConfig::default(),
            noise: NoiseSpec::default(),
            linefit: LineFitParams::default(),
            filter: FilterConfig::default(),
            matching: MatchSpec::default(),
            pipeline: PipelineOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Reads and validates a config file. A relative `rig` path is taken
    /// relative to the config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        if let (Some(rig), Some(dir)) = (&cfg.rig, path.parent()) {
            if rig.is_relative() {
                cfg.rig = Some(dir.join(rig));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::Version(self.version));
        }
        let inv = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.noise.validate().map_err(|e| inv(&e))?;
        self.linefit.validate().map_err(|e| inv(&e))?;
        self.filter.validate().map_err(|e| inv(&e))?;
        self.matching.validate().map_err(|e| inv(&e))?;
        if let Some(rig) = &self.rig {
            if !rig.is_file() {
                return Err(ConfigError::Invalid(format!("rig file {} does not exist", rig.display())));
            }
        }
        Ok(())
    }

    /// The configured rig, or the built-in one.
    pub fn load_rig(&self) -> Result<CameraRig, ConfigError> {
        match &self.rig {
            Some(p) => CameraRig::load(p).map_err(|e| ConfigError::Invalid(e.to_string())),
            None => Ok(CameraRig::default_rig()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.filter.lambda, [1.0, 1.0, 1.0]);
        let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn minimal_file() {
        let cfg = PipelineConfig::from_toml("version = 1\n").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
    }

    #[test]
    fn lambda_from_file() {
        let cfg = PipelineConfig::from_toml("version = 1\n[filter]\nlambda = [0.5, 2.0, 3.0]\n").unwrap();
        assert_eq!(cfg.filter.lambda, [0.5, 2.0, 3.0]);
        assert_eq!(cfg.filter.sigma_max, FilterConfig::default().sigma_max);
    }

    #[test]
    fn unknown_keys_and_versions_rejected() {
        assert!(PipelineConfig::from_toml("version = 1\nspeed = 3\n").is_err());
        assert!(PipelineConfig::from_toml("version = 1\n[filter]\nsigma = 3\n").is_err());
        assert!(PipelineConfig::from_toml("version = 1\n[scene]\ntemplate = \"maze\"\n").is_err());
        let cfg = PipelineConfig { version: 2, ..PipelineConfig::default() };
        assert!(matches!(cfg.validate(), Err(ConfigError::Version(2))));
    }

    #[test]
    fn missing_rig_file_rejected() {
        let cfg = PipelineConfig { rig: Some("/nonexistent/rig.toml".into()), ..PipelineConfig::default() };
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }
}
