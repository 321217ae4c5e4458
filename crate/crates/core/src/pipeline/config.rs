use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RigSpec;
use crate::par::Execution;
use crate::raster::RasterConfig;
use crate::schedule::{ScheduleKind, ScheduleParams};
use crate::uvdiff::{AggregationConfig, AggregationMode};

/// Every knob of a texturing run. Loaded from TOML; missing keys take the
/// defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub steps: usize,
    pub schedule: ScheduleKind,
    pub schedule_params: ScheduleParams,
    pub rig: RigSpec,
    /// Side of the square per-view latent images.
    pub latent_resolution: usize,
    /// Side of the square UV textures.
    pub uv_resolution: usize,
    /// Latent channels when the backend does not declare its own.
    pub channels: usize,
    /// Weight of the reference texture on visible texels.
    pub lambda: f64,
    pub aggregation: AggregationConfig,
    pub raster: RasterConfig,
    pub keyframe_interval: usize,
    pub mode: AggregationMode,
    pub seed: u64,
    pub prompt: String,
    /// `oracle`, `noisy-oracle`, `echo` or `remote:HOST:PORT`.
    pub denoiser: String,
    /// Standard deviation added by `noisy-oracle`.
    pub noise_sigma: f64,
    /// Whether to run and composite background plates.
    pub background: bool,
    /// Gutter dilation passes applied to finalized textures.
    pub dilation: usize,
    pub execution: Execution,
    /// Opaque parameters forwarded to the backend with every request.
    pub guidance: BTreeMap<String, serde_json::Value>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            schedule: ScheduleKind::default(),
            schedule_params: ScheduleParams::default(),
            rig: RigSpec::default(),
            latent_resolution: 96,
            uv_resolution: 512,
            channels: 3,
            lambda: 0.2,
            aggregation: AggregationConfig::default(),
            raster: RasterConfig::default(),
            keyframe_interval: 3,
            mode: AggregationMode::default(),
            seed: 0,
            prompt: String::new(),
            denoiser: "oracle".into(),
            noise_sigma: 0.05,
            background: true,
            dilation: 2,
            execution: Execution::default(),
            guidance: BTreeMap::new(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("steps", self.steps),
            ("latent_resolution", self.latent_resolution),
            ("uv_resolution", self.uv_resolution),
            ("channels", self.channels),
            ("keyframe_interval", self.keyframe_interval),
            ("rig.azimuth_count", self.rig.azimuth_count),
            ("raster.supersample", self.raster.supersample),
        ] {
            if v < 1 {
                return Err(Error::invalid(format!("{name} must be >= 1")));
            }
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!(
                "lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        if !(self.raster.depth_tolerance >= 0.0) {
            return Err(Error::invalid("raster.depth_tolerance must be >= 0"));
        }
        self.aggregation.validate()
    }

    /// Raster settings with this config's execution policy.
    pub fn raster(&self) -> RasterConfig {
        RasterConfig {
            execution: self.execution,
            ..self.raster
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}
