//! The pluggable denoising backend and the built-in implementations.

mod noisy;
mod oracle;
pub mod protocol;
mod remote;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::schedule::PredictionKind;

pub use noisy::NoisyOracleDenoiser;
pub use oracle::OracleDenoiser;
pub use remote::{RemoteDenoiser, RemoteOptions};

/// Everything a backend sees for one view: all keyframes are denoised jointly.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseRequest {
    pub view_id: usize,
    /// Sampling timestep in `[1, T]`.
    pub timestep: usize,
    /// The corresponding timestep of the backend's training schedule.
    pub train_timestep: usize,
    /// `K` latents, each `C x H x W`.
    pub latents: Vec<Grid>,
    /// `K` depth maps, each `1 x H x W`, `+inf` on background.
    pub depths: Vec<Grid>,
    pub prompt: String,
    /// Opaque backend parameters, passed through untouched.
    pub guidance: BTreeMap<String, serde_json::Value>,
    /// Set for background-plate requests, whose depth is all `+inf`.
    pub background: bool,
}

impl DenoiseRequest {
    pub fn frame_count(&self) -> usize {
        self.latents.len()
    }

    /// `(C, H, W)` of every latent.
    pub fn latent_shape(&self) -> (usize, usize, usize) {
        self.latents.first().map(Grid::shape).unwrap_or((0, 0, 0))
    }

    pub fn validate(&self) -> Result<()> {
        if self.latents.is_empty() {
            return Err(Error::invalid("denoise request has no frames"));
        }
        if self.latents.len() != self.depths.len() {
            return Err(Error::shape(
                format!("{} depth maps", self.latents.len()),
                self.depths.len(),
            ));
        }
        let (_, h, w) = self.latent_shape();
        for (l, d) in self.latents.iter().zip(&self.depths) {
            self.latents[0].ensure_shape(l)?;
            if d.shape() != (1, h, w) {
                return Err(Error::shape(format!("depth 1x{h}x{w}"), d.shape()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseResponse {
    pub kind: PredictionKind,
    pub frames: Vec<Grid>,
}

/// Declared once per backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub kind: PredictionKind,
    /// Whether `denoise` may be called from several threads at once.
    pub concurrent: bool,
    /// Latent channel count the backend operates on, when fixed.
    #[serde(default)]
    pub channels: Option<usize>,
    #[serde(default)]
    pub name: String,
}

pub trait Denoiser: Send + Sync {
    fn handshake(&self) -> Result<Handshake>;
    fn denoise(&self, req: &DenoiseRequest) -> Result<DenoiseResponse>;
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn handshake(&self) -> Result<Handshake> {
        (**self).handshake()
    }
    fn denoise(&self, req: &DenoiseRequest) -> Result<DenoiseResponse> {
        (**self).denoise(req)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for std::sync::Arc<D> {
    fn handshake(&self) -> Result<Handshake> {
        (**self).handshake()
    }
    fn denoise(&self, req: &DenoiseRequest) -> Result<DenoiseResponse> {
        (**self).denoise(req)
    }
}

/// Calls the backend and checks its answer against the request and the
/// declared prediction kind.
pub fn checked_denoise(
    denoiser: &dyn Denoiser,
    req: &DenoiseRequest,
    declared: PredictionKind,
) -> Result<DenoiseResponse> {
    req.validate()?;
    let resp = denoiser.denoise(req)?;
    if resp.kind != declared {
        return Err(Error::Protocol(format!(
            "backend declared {declared} predictions but answered {}",
            resp.kind
        )));
    }
    if resp.frames.len() != req.frame_count() {
        return Err(Error::shape(
            format!("{} frames", req.frame_count()),
            resp.frames.len(),
        ));
    }
    for (f, l) in resp.frames.iter().zip(&req.latents) {
        l.ensure_shape(f)?;
        if !f.is_finite() {
            return Err(Error::Protocol("backend returned non-finite values".into()));
        }
    }
    Ok(resp)
}

/// Returns the request latents unchanged as `x0` predictions.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoDenoiser;

impl Denoiser for EchoDenoiser {
    fn handshake(&self) -> Result<Handshake> {
        Ok(Handshake {
            kind: PredictionKind::X0,
            concurrent: true,
            channels: None,
            name: "echo".into(),
        })
    }

    fn denoise(&self, req: &DenoiseRequest) -> Result<DenoiseResponse> {
        Ok(DenoiseResponse {
            kind: PredictionKind::X0,
            frames: req.latents.clone(),
        })
    }
}

/// Deterministic stream seed derived from a base seed and a tuple of indices.
pub(crate) fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    // splitmix64 finalizer folded over the parts
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}
