//! End-to-end texturing: noise initialization, the synchronized denoising
//! loop, finalization, keyframe interpolation and export.

mod config;
mod finalize;
mod generate;
mod render;
mod scene;

use std::path::Path;

use serde::Serialize;

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::geometry::{CameraRig, MeshSequence};
use crate::grid::{load_grid, save_grid, Grid};
use crate::image_io::{save_gray_png, save_grid_png};
use crate::uvdiff::LatentTexture;

pub use config::PipelineConfig;
pub use finalize::{
    finalize_textures, interpolate_keyframes, CoverageReport, FinalTextures, IdentityDecoder,
    LatentDecoder, TexelStatus,
};
pub use generate::{
    gaussian_grid, run_diffusion, Checkpoint, CheckpointWriter, DiffusionOutput, NoObserver,
    StepObserver, StepState, Timings,
};
pub use render::{consistency, render_sequence, Consistency, FrameReport, RenderOptions};
pub use scene::Scene;

/// Result of a texturing run.
#[derive(Debug, Clone)]
pub struct TextureSequence {
    /// Finalized texture per keyframe.
    pub keyframes: Vec<Grid>,
    /// Final-bake aggregation weight per keyframe, `1 x R x R`.
    pub coverage: Vec<Grid>,
    pub reports: Vec<CoverageReport>,
    /// Keyframes plus linearly interpolated in-betweens.
    pub interpolated: Vec<Grid>,
    pub interval: usize,
    /// UV latents at the end of diffusion.
    pub latent_textures: Vec<LatentTexture>,
    pub timings: Timings,
}

pub struct GenerateOptions<'a> {
    pub observer: &'a mut dyn StepObserver,
    pub decoder: &'a dyn LatentDecoder,
    pub resume: Option<Checkpoint>,
}

/// Textures `meshes` as seen by `rig` with the given backend.
pub fn generate(
    meshes: &MeshSequence,
    rig: &CameraRig,
    cfg: &PipelineConfig,
    denoiser: &dyn Denoiser,
) -> Result<TextureSequence> {
    let mut obs = NoObserver;
    generate_with(
        meshes,
        rig,
        cfg,
        denoiser,
        GenerateOptions {
            observer: &mut obs,
            decoder: &IdentityDecoder,
            resume: None,
        },
    )
}

pub fn generate_with(
    meshes: &MeshSequence,
    rig: &CameraRig,
    cfg: &PipelineConfig,
    denoiser: &dyn Denoiser,
    opts: GenerateOptions<'_>,
) -> Result<TextureSequence> {
    cfg.validate()?;
    let clock = std::time::Instant::now();
    let scene = Scene::prepare(
        meshes,
        rig,
        cfg.latent_resolution,
        cfg.uv_resolution,
        &cfg.raster(),
    )?;
    let prepare = clock.elapsed();
    generate_in_scene(&scene, cfg, denoiser, opts).map(|mut s| {
        s.timings.prepare = prepare;
        s
    })
}

/// Like [`generate_with`] on a prepared scene.
pub fn generate_in_scene(
    scene: &Scene,
    cfg: &PipelineConfig,
    denoiser: &dyn Denoiser,
    opts: GenerateOptions<'_>,
) -> Result<TextureSequence> {
    let out = run_diffusion(scene, cfg, denoiser, opts.observer, opts.resume)?;
    let clock = std::time::Instant::now();
    let fin = finalize_textures(
        scene,
        &out.textures,
        opts.decoder,
        &cfg.aggregation,
        cfg.dilation,
        cfg.execution,
    )?;
    let interval = if scene.frame_count() > 1 {
        cfg.keyframe_interval
    } else {
        1
    };
    let interpolated = interpolate_keyframes(&fin.textures, interval)?;
    let mut timings = out.timings;
    timings.finalize = clock.elapsed();
    Ok(TextureSequence {
        keyframes: fin.textures,
        coverage: fin.coverage,
        reports: fin.reports,
        interpolated,
        interval,
        latent_textures: out.textures,
        timings,
    })
}

#[derive(Serialize)]
struct Summary<'a> {
    keyframes: usize,
    interpolated: usize,
    interval: usize,
    coverage: &'a [CoverageReport],
}

impl TextureSequence {
    /// Writes `keyframes/`, `interpolated/` and `coverage.json` under `dir`.
    /// Textures are PNG (values in `[0, 1]`) plus raw grids.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let keys = dir.join("keyframes");
        let inter = dir.join("interpolated");
        std::fs::create_dir_all(&keys)?;
        std::fs::create_dir_all(&inter)?;
        for (k, tex) in self.keyframes.iter().enumerate() {
            let mut meta = serde_json::Map::new();
            meta.insert("frame".into(), k.into());
            save_grid(keys.join(format!("texture_{k:04}.grid")), tex, meta)?;
            save_grid_png(keys.join(format!("texture_{k:04}.png")), tex, 0.0, 1.0)?;
            let cov = &self.coverage[k];
            let peak = cov.data().iter().cloned().fold(0.0f32, f32::max);
            save_gray_png(
                keys.join(format!("coverage_{k:04}.png")),
                cov.data(),
                cov.width(),
                cov.height(),
                0.0,
                peak.max(f32::MIN_POSITIVE),
            )?;
            save_grid(
                keys.join(format!("latent_{k:04}.grid")),
                &self.latent_textures[k].values,
                Default::default(),
            )?;
        }
        for (i, tex) in self.interpolated.iter().enumerate() {
            save_grid(
                inter.join(format!("frame_{i:04}.grid")),
                tex,
                Default::default(),
            )?;
            save_grid_png(inter.join(format!("frame_{i:04}.png")), tex, 0.0, 1.0)?;
        }
        let summary = Summary {
            keyframes: self.keyframes.len(),
            interpolated: self.interpolated.len(),
            interval: self.interval,
            coverage: &self.reports,
        };
        let json =
            serde_json::to_string_pretty(&summary).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(dir.join("coverage.json"), json)?;
        Ok(())
    }

    /// Reads the keyframe textures written by [`TextureSequence::save`].
    pub fn load_keyframes(dir: impl AsRef<Path>) -> Result<Vec<Grid>> {
        let keys = dir.as_ref().join("keyframes");
        let mut out = Vec::new();
        loop {
            let p = keys.join(format!("texture_{:04}.grid", out.len()));
            if !p.exists() {
                break;
            }
            out.push(load_grid(&p)?.0);
        }
        if out.is_empty() {
            return Err(Error::invalid(format!(
                "no keyframe textures under {}",
                keys.display()
            )));
        }
        Ok(out)
    }
}
