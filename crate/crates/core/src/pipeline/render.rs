use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};
use crate::geometry::{Camera, CameraRig, MeshSequence};
use crate::grid::{save_grid, Grid};
use crate::image_io::save_grid_png;
use crate::par::Execution;
use crate::raster::{render_buffers, render_texture, RasterConfig, UvRaster, VisibilityMap};

use super::finalize::interpolate_keyframes;

/// Spread of a texture's appearance across views of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    /// Texels seen by at least two views.
    pub texels: usize,
    pub mean_std: f64,
    pub max_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame: usize,
    pub image: PathBuf,
    pub consistency: Option<Consistency>,
}

#[derive(Debug, Clone, Default)]
pub struct RenderOptions {
    pub raster: RasterConfig,
    /// Views for the consistency report; none skips it.
    pub consistency_rig: Option<CameraRig>,
    /// Value mapped to black and white in the PNGs.
    pub value_range: Option<(f32, f32)>,
}

/// Renders every keyframe and in-between from `camera` into
/// `out_dir/frame_NNNN.png` and writes `out_dir/report.json`.
pub fn render_sequence(
    meshes: &MeshSequence,
    keyframes: &[Grid],
    interval: usize,
    camera: &Camera,
    out_dir: impl AsRef<Path>,
    opts: &RenderOptions,
) -> Result<Vec<FrameReport>> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).context(|| out_dir.display().to_string())?;
    if keyframes.len() != meshes.frame_count() {
        return Err(Error::shape(
            format!("{} keyframe textures", meshes.frame_count()),
            keyframes.len(),
        ));
    }
    let frames = if meshes.frame_count() > 1 {
        meshes.with_inbetweens(interval)?
    } else {
        meshes.clone()
    };
    let textures = interpolate_keyframes(
        keyframes,
        if meshes.frame_count() > 1 {
            interval
        } else {
            1
        },
    )?;
    let (lo, hi) = opts.value_range.unwrap_or((0.0, 1.0));
    let exec = opts.raster.execution;
    let uv = opts
        .consistency_rig
        .as_ref()
        .map(|_| UvRaster::build(&frames, textures[0].width(), exec));
    let eps = opts.raster.depth_tolerance * frames.aabb().diagonal();

    let mut reports = Vec::with_capacity(textures.len());
    for (i, tex) in textures.iter().enumerate() {
        let frame = frames.frame(i);
        let b = render_buffers(&frame, camera, camera.resolution(), &opts.raster)?;
        let img = render_texture(tex, &b, exec)?;
        let path = out_dir.join(format!("frame_{i:04}.png"));
        save_grid_png(&path, &img, lo, hi)?;
        save_grid(
            out_dir.join(format!("frame_{i:04}.grid")),
            &img,
            Default::default(),
        )?;
        let consistency = match (&opts.consistency_rig, &uv) {
            (Some(rig), Some(uv)) => Some(consistency(
                &frame,
                tex,
                rig,
                camera.resolution(),
                uv,
                eps,
                &opts.raster,
            )?),
            _ => None,
        };
        reports.push(FrameReport {
            frame: i,
            image: path,
            consistency,
        });
    }
    let json = serde_json::to_string_pretty(&reports).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(out_dir.join("report.json"), json)?;
    Ok(reports)
}

/// Renders `texture` from every rig view, un-projects each render, and
/// measures the per-texel standard deviation across the views that see it.
pub fn consistency(
    frame: &crate::geometry::MeshFrame<'_>,
    texture: &Grid,
    rig: &CameraRig,
    resolution: (usize, usize),
    uv: &UvRaster,
    depth_eps: f64,
    raster: &RasterConfig,
) -> Result<Consistency> {
    let inner = RasterConfig {
        execution: Execution::Sequential,
        ..*raster
    };
    let partials = raster.execution.try_map(rig.len(), |v| {
        let b = render_buffers(frame, rig.get(v), resolution, &inner)?;
        let img = render_texture(texture, &b, Execution::Sequential)?;
        VisibilityMap::build(frame, &b, uv, depth_eps, Execution::Sequential)
            .unproject(&img, Execution::Sequential)
    })?;
    let (c, r, _) = texture.shape();
    let n = r * r;
    let (mut count, mut sum, mut max) = (0usize, 0f64, 0f64);
    for i in 0..n {
        let seen: Vec<_> = partials
            .iter()
            .filter(|p| p.weight.data()[i] > 0.0)
            .collect();
        if seen.len() < 2 {
            continue;
        }
        let mut std = 0.0;
        for ch in 0..c {
            let xs: Vec<f64> = seen
                .iter()
                .map(|p| p.values.data()[ch * n + i] as f64)
                .collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            std += (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
        }
        std /= c as f64;
        count += 1;
        sum += std;
        max = max.max(std);
    }
    Ok(Consistency {
        texels: count,
        mean_std: if count > 0 { sum / count as f64 } else { 0.0 },
        max_std: max,
    })
}
