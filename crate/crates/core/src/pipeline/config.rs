use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{NoiseModel, RemoteConfig};
use crate::geodesic::{CapitalAverage, GeodesicBackend, Reweighting};
use crate::render::{ViewSampling, DEFAULT_CAMERA_DISTANCE, DEFAULT_FOV_Y};
use crate::scoring::{LabelPolicy, NormalizeAxis, ViewAggregation};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    #[default]
    Oracle,
    Replay,
    Remote,
}

impl std::str::FromStr for DetectorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(DetectorKind::Oracle),
            "replay" => Ok(DetectorKind::Replay),
            "remote" => Ok(DetectorKind::Remote),
            other => Err(format!("unknown detector {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    pub noise: NoiseModel,
    /// Detection record to replay.
    pub replay: Option<PathBuf>,
    pub remote: RemoteConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub n_views: usize,
    pub sampling: ViewSampling,
    pub seed: u64,
    pub resolution: usize,
    pub camera_distance: f64,
    pub fov_y: f64,
    pub q: usize,
    pub reweighting: Reweighting,
    pub smoothing: bool,
    pub aggregation: ViewAggregation,
    pub normalize: NormalizeAxis,
    /// Faces whose best normalized score falls below this get label -1.
    pub background: Option<f64>,
    pub geodesic: GeodesicBackend,
    pub capital: CapitalAverage,
    pub color: [u8; 3],
    pub detector: DetectorConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_views: 10,
            sampling: ViewSampling::Normal,
            seed: 0,
            resolution: 1024,
            camera_distance: DEFAULT_CAMERA_DISTANCE,
            fov_y: DEFAULT_FOV_Y,
            q: 5,
            reweighting: Reweighting::Gaussian,
            smoothing: true,
            aggregation: ViewAggregation::Max,
            normalize: NormalizeAxis::PerPrompt,
            background: None,
            geodesic: GeodesicBackend::Graph,
            capital: CapitalAverage::AreaWeightedCentroids,
            color: [180, 180, 180],
            detector: DetectorConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Named starting points. `human` uses the wider 10-ring.
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        match name {
            "default" => Ok(Self::default()),
            "human" => Ok(PipelineConfig {
                q: 10,
                ..Self::default()
            }),
            "baseline" => Ok(Self::default().baseline()),
            other => Err(ConfigError::Invalid(format!("unknown preset {other:?}"))),
        }
    }

    /// Same settings with the topology-aware terms switched off.
    pub fn baseline(mut self) -> Self {
        self.reweighting = Reweighting::None;
        self.smoothing = false;
        self
    }

    pub fn label_policy(&self) -> LabelPolicy {
        match self.background {
            Some(tau) => LabelPolicy::ArgmaxWithBackground(tau),
            None => LabelPolicy::Argmax,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.n_views == 0 {
            return bad("n_views must be at least 1");
        }
        if self.resolution < 16 {
            return bad("resolution must be at least 16");
        }
        if self.q == 0 {
            return bad("q must be at least 1");
        }
        if !(self.camera_distance > 1.0) {
            return bad("camera_distance must exceed 1");
        }
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return bad("fov_y must lie in (0, pi)");
        }
        if let Some(t) = self.background {
            if !(0.0..=1.0).contains(&t) {
                return bad("background threshold must lie in [0, 1]");
            }
        }
        self.detector
            .noise
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }
}
