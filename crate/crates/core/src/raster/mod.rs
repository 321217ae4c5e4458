//! Software rasterizer providing the forward render operator (UV texture to
//! view image plus auxiliary buffers) and its inverse (view image to partial
//! UV texture).

mod buffers;
pub mod dilate;
pub mod dump;
mod rasterize;
mod sample;
mod unproject;
mod uv_raster;

use serde::{Deserialize, Serialize};

pub use buffers::{render_buffers, render_texture, RenderBuffers};
pub use rasterize::{rasterize, IdBuffer, NEAR, NO_TRIANGLE};
pub use sample::{bilinear_taps, sample_texture};
pub use unproject::{unproject, PartialTexture, VisibilityMap};
pub use uv_raster::{texel_uv, uv_to_texel, UvRaster};

use crate::par::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterConfig {
    /// Samples per pixel along each axis for coverage and visibility.
    pub supersample: usize,
    /// Visibility depth tolerance as a fraction of the scene bounding-box diagonal.
    pub depth_tolerance: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            supersample: 2,
            depth_tolerance: 1e-3,
            execution: Execution::default(),
        }
    }
}
