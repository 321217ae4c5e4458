//! UV-space synchronization: multi-view aggregation, the UV denoising step,
//! reference construction and blending, and view-space compositing.

mod aggregate;
mod ops;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

pub use aggregate::{aggregate_views, view_weight};
pub use ops::{blend_with_reference, build_reference, composite, uv_ddim_from_eps, uv_ddim_step};

/// Coverage above which a texel counts as visible in a frame.
pub const FILL_THRESHOLD: f32 = 1e-6;

/// A per-frame UV latent with its accumulated view weight.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTexture {
    /// `C x R x R`.
    pub values: Grid,
    /// `1 x R x R`, zero where no view contributed.
    pub coverage: Grid,
    pub frame_index: usize,
}

impl LatentTexture {
    pub fn new(values: Grid, coverage: Grid, frame_index: usize) -> Result<Self> {
        let (_, h, w) = values.shape();
        if h != w {
            return Err(Error::invalid(format!(
                "texture must be square, got {h}x{w}"
            )));
        }
        if coverage.shape() != (1, h, w) {
            return Err(Error::ShapeMismatch {
                expected: format!("1x{h}x{w}"),
                found: format!("{:?}", coverage.shape()),
            });
        }
        Ok(Self {
            values,
            coverage,
            frame_index,
        })
    }

    pub fn zeros(channels: usize, resolution: usize, frame_index: usize) -> Self {
        Self {
            values: Grid::zeros(channels, resolution, resolution),
            coverage: Grid::zeros(1, resolution, resolution),
            frame_index,
        }
    }

    /// Texture whose every texel counts as covered with unit weight.
    pub fn fully_covered(values: Grid, frame_index: usize) -> Result<Self> {
        let (_, h, w) = values.shape();
        Self::new(values, Grid::filled(1, h, w, 1.0), frame_index)
    }

    pub fn channels(&self) -> usize {
        self.values.channels()
    }

    pub fn resolution(&self) -> usize {
        self.values.width()
    }

    pub fn is_covered(&self, texel: usize) -> bool {
        self.coverage.data()[texel] > FILL_THRESHOLD
    }

    /// Per-frame visibility indicator `1 x R x R` with values in `{0, 1}`.
    pub fn visibility_mask(&self) -> Grid {
        self.coverage
            .map(|c| if c > FILL_THRESHOLD as f64 { 1.0 } else { 0.0 })
    }

    pub fn covered_count(&self) -> usize {
        (0..self.coverage.data().len())
            .filter(|&i| self.is_covered(i))
            .count()
    }
}

/// Texels filled sequentially from the frames' clean estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTexture {
    /// `C x R x R`; zero where `mask` is zero.
    pub values: Grid,
    /// `1 x R x R` in `{0, 1}`.
    pub mask: Grid,
}

impl ReferenceTexture {
    pub fn resolution(&self) -> usize {
        self.values.width()
    }

    pub fn filled_count(&self) -> usize {
        self.mask.data().iter().filter(|&&m| m > 0.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregationConfig {
    /// Exponent applied to the view cosine.
    pub cosine_exponent: f64,
    /// Cosines below this contribute nothing.
    pub cos_min: f64,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            cosine_exponent: 3.0,
            cos_min: 0.1,
        }
    }
}

impl AggregationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cosine_exponent > 0.0 && self.cosine_exponent.is_finite()) {
            return Err(Error::invalid("cosine exponent must be positive"));
        }
        if !(0.0..1.0).contains(&self.cos_min) {
            return Err(Error::invalid("cos_min must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Which quantities are baked into UV space before each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationMode {
    /// Bake the clean estimate only, then step in UV space with the implied noise.
    #[default]
    Proposed,
    /// Bake both the clean estimate and the predicted noise, then step in UV space.
    AggX0Eps,
    /// Step each view in view space, then bake the stepped latents.
    AggZprev,
}

impl std::str::FromStr for AggregationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "proposed" => Ok(Self::Proposed),
            "agg-x0-eps" | "agg-x0-and-eps" => Ok(Self::AggX0Eps),
            "agg-zprev" | "agg-z-prev" => Ok(Self::AggZprev),
            _ => Err(Error::invalid(format!("unknown aggregation mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Proposed => "proposed",
            Self::AggX0Eps => "agg-x0-eps",
            Self::AggZprev => "agg-zprev",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_parsing() {
        for (s, m) in [
            ("proposed", AggregationMode::Proposed),
            ("agg_x0_and_eps", AggregationMode::AggX0Eps),
            ("agg-x0-eps", AggregationMode::AggX0Eps),
            ("agg_z_prev", AggregationMode::AggZprev),
            ("agg-zprev", AggregationMode::AggZprev),
        ] {
            assert_eq!(s.parse::<AggregationMode>().unwrap(), m);
        }
        assert!(matches!(
            "fancy".parse::<AggregationMode>(),
            Err(Error::InvalidArgument(_))
        ));
        for m in [
            AggregationMode::Proposed,
            AggregationMode::AggX0Eps,
            AggregationMode::AggZprev,
        ] {
            assert_eq!(m.to_string().parse::<AggregationMode>().unwrap(), m);
        }
    }

    #[test]
    fn config_validation() {
        assert!(AggregationConfig::default().validate().is_ok());
        assert!(AggregationConfig {
            cosine_exponent: 0.0,
            cos_min: 0.1
        }
        .validate()
        .is_err());
        assert!(AggregationConfig {
            cosine_exponent: 1.0,
            cos_min: 1.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn texture_must_be_square() {
        assert!(LatentTexture::new(Grid::zeros(3, 4, 5), Grid::zeros(1, 4, 5), 0).is_err());
        assert!(LatentTexture::new(Grid::zeros(3, 4, 4), Grid::zeros(1, 4, 3), 0).is_err());
    }

    #[test]
    fn visibility_mask_thresholds_coverage() {
        let cov = Grid::from_vec(1, 2, 2, vec![0.0, 1e-7, 2e-6, 1.0]).unwrap();
        let t = LatentTexture::new(Grid::zeros(1, 2, 2), cov, 0).unwrap();
        assert_eq!(t.visibility_mask().data(), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(t.covered_count(), 2);
    }
}
