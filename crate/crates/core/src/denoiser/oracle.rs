use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{CameraRig, MeshSequence};
use crate::grid::Grid;
use crate::par::Execution;
use crate::raster::{render_buffers, render_texture, RasterConfig, RenderBuffers};
use crate::schedule::PredictionKind;

use super::{DenoiseRequest, DenoiseResponse, Denoiser, Handshake};

/// Answers every foreground request with the target textures rendered into
/// the requesting view, as clean-sample predictions. Background requests get
/// zeros. Inputs are ignored.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    /// `[view][frame]`.
    renders: Arc<Vec<Vec<Grid>>>,
}

impl OracleDenoiser {
    /// `buffers` is indexed `[view][frame]` and `targets` by frame.
    pub fn from_buffers(
        targets: &[Grid],
        buffers: &[Vec<RenderBuffers>],
        exec: Execution,
    ) -> Result<Self> {
        let renders = buffers
            .iter()
            .map(|per_frame| {
                if per_frame.len() != targets.len() {
                    return Err(Error::shape(
                        format!("{} frames", targets.len()),
                        per_frame.len(),
                    ));
                }
                per_frame
                    .iter()
                    .zip(targets)
                    .map(|(b, t)| render_texture(t, b, exec))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            renders: Arc::new(renders),
        })
    }

    pub fn new(
        targets: &[Grid],
        meshes: &MeshSequence,
        rig: &CameraRig,
        latent_resolution: usize,
        raster: &RasterConfig,
    ) -> Result<Self> {
        if targets.len() != meshes.frame_count() {
            return Err(Error::shape(
                format!("{} targets", meshes.frame_count()),
                targets.len(),
            ));
        }
        let buffers = rig
            .cameras()
            .iter()
            .map(|cam| {
                (0..meshes.frame_count())
                    .map(|k| {
                        render_buffers(
                            &meshes.frame(k),
                            cam,
                            (latent_resolution, latent_resolution),
                            raster,
                        )
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_buffers(targets, &buffers, raster.execution)
    }

    /// The clean render of frame `k` seen from view `v`.
    pub fn render(&self, view: usize, frame: usize) -> &Grid {
        &self.renders[view][frame]
    }

    pub fn view_count(&self) -> usize {
        self.renders.len()
    }
}

impl Denoiser for OracleDenoiser {
    fn handshake(&self) -> Result<Handshake> {
        Ok(Handshake {
            kind: PredictionKind::X0,
            concurrent: true,
            channels: self
                .renders
                .first()
                .and_then(|f| f.first())
                .map(Grid::channels),
            name: "oracle".into(),
        })
    }

    fn denoise(&self, req: &DenoiseRequest) -> Result<DenoiseResponse> {
        let per_frame = self
            .renders
            .get(req.view_id)
            .ok_or_else(|| Error::invalid(format!("oracle has no view {}", req.view_id)))?;
        if per_frame.len() != req.frame_count() {
            return Err(Error::shape(
                format!("{} frames", per_frame.len()),
                req.frame_count(),
            ));
        }
        let frames = per_frame
            .iter()
            .zip(&req.latents)
            .map(|(r, l)| {
                l.ensure_shape(r)?;
                Ok(if req.background {
                    Grid::zeros(r.channels(), r.height(), r.width())
                } else {
                    r.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DenoiseResponse {
            kind: PredictionKind::X0,
            frames,
        })
    }
}
