use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};
use crate::grid::Grid;
use crate::par::Execution;
use crate::raster::{dilate::dilate, render_buffers, VisibilityMap};
use crate::uvdiff::{
    aggregate_views, build_reference, AggregationConfig, LatentTexture, FILL_THRESHOLD,
};

use super::Scene;

/// Maps a view latent to the image that gets baked into the final texture.
pub trait LatentDecoder: Sync {
    fn decode(&self, latent: &Grid) -> Result<Grid>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityDecoder;

impl LatentDecoder for IdentityDecoder {
    fn decode(&self, latent: &Grid) -> Result<Grid> {
        Ok(latent.clone())
    }
}

impl<F: Fn(&Grid) -> Result<Grid> + Sync> LatentDecoder for F {
    fn decode(&self, latent: &Grid) -> Result<Grid> {
        self(latent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TexelStatus {
    /// Seen by no view in any frame and beyond the dilation reach.
    Empty,
    /// Baked from this frame's views.
    Covered,
    /// Hidden in this frame, copied from the earliest frame that saw it.
    ReferenceFilled,
    /// Filled from covered neighbors.
    Dilated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub frame: usize,
    pub covered: usize,
    pub reference_filled: usize,
    pub dilated: usize,
    pub empty: usize,
    #[serde(skip)]
    pub status: Vec<TexelStatus>,
}

impl CoverageReport {
    fn from_status(frame: usize, status: Vec<TexelStatus>) -> Self {
        let count = |s| status.iter().filter(|&&x| x == s).count();
        Self {
            frame,
            covered: count(TexelStatus::Covered),
            reference_filled: count(TexelStatus::ReferenceFilled),
            dilated: count(TexelStatus::Dilated),
            empty: count(TexelStatus::Empty),
            status,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FinalTextures {
    /// One `C' x R x R` texture per keyframe.
    pub textures: Vec<Grid>,
    /// Aggregation weight of each texel at the final bake.
    pub coverage: Vec<Grid>,
    pub reports: Vec<CoverageReport>,
}

/// Dilation passes applied to the UV latents before they are rendered, so
/// bilinear taps at the coverage boundary never read unbaked texels.
pub const RENDER_PADDING: usize = 8;

/// Renders the `t = 0` UV latents into every view, decodes them, and bakes
/// the decoded images back into UV space. Texels hidden in a frame take the
/// value of the earliest frame that saw them; what remains is padded by
/// `dilation` passes.
pub fn finalize_textures(
    scene: &Scene,
    textures: &[LatentTexture],
    decoder: &dyn LatentDecoder,
    aggregation: &AggregationConfig,
    dilation: usize,
    exec: Execution,
) -> Result<FinalTextures> {
    let (vn, kn) = (scene.view_count(), scene.frame_count());
    if textures.len() != kn {
        return Err(Error::shape(format!("{kn} textures"), textures.len()));
    }
    let padded: Vec<Grid> = textures
        .iter()
        .map(|t| {
            let mut values = t.values.clone();
            let mut filled: Vec<bool> = (0..t.coverage.data().len())
                .map(|i| t.is_covered(i))
                .collect();
            dilate(&mut values, &mut filled, RENDER_PADDING);
            values
        })
        .collect();
    let decoded = exec.try_map(vn * kn, |i| {
        let (k, v) = (i / vn, i % vn);
        let latent = scene.render(&padded[k], v, k)?;
        decoder.decode(&latent).map_err(|e| {
            Error::BackendUnavailable(format!("decoder failed on view {v}, frame {k}: {e}"))
        })
    })?;

    let r = scene.uv_resolution();
    let lr = scene.latent_resolution;
    let eps = scene.raster.depth_tolerance * scene.meshes.aabb().diagonal();
    let partials = exec.try_map(vn * kn, |i| {
        let (k, v) = (i / vn, i % vn);
        let img = &decoded[i];
        if img.height() == lr && img.width() == lr {
            return scene.unproject(img, v, k);
        }
        // Decoders may change resolution; rebuild visibility at the decoded size.
        let frame = scene.meshes.frame(k);
        let cfg = crate::raster::RasterConfig {
            execution: Execution::Sequential,
            ..scene.raster
        };
        let b = render_buffers(&frame, scene.rig.get(v), (img.width(), img.height()), &cfg)
            .context(|| format!("decoded view {v}, frame {k}"))?;
        VisibilityMap::build(&frame, &b, &scene.uv, eps, Execution::Sequential)
            .unproject(img, Execution::Sequential)
    })?;
    let mut baked = Vec::with_capacity(kn);
    for (k, ps) in partials.chunks(vn).enumerate() {
        baked.push(aggregate_views(ps, aggregation, k, exec)?);
    }

    let reference = build_reference(&baked)?;
    let n = r * r;
    let mut out = FinalTextures {
        textures: Vec::with_capacity(kn),
        coverage: Vec::with_capacity(kn),
        reports: Vec::with_capacity(kn),
    };
    for (k, tex) in baked.into_iter().enumerate() {
        let c = tex.channels();
        let mut values = tex.values;
        let mut status = vec![TexelStatus::Empty; n];
        let mut filled = vec![false; n];
        for i in 0..n {
            if tex.coverage.data()[i] > FILL_THRESHOLD {
                status[i] = TexelStatus::Covered;
                filled[i] = true;
            } else if reference.mask.data()[i] > 0.0 {
                status[i] = TexelStatus::ReferenceFilled;
                filled[i] = true;
                for ch in 0..c {
                    values.data_mut()[ch * n + i] = reference.values.data()[ch * n + i];
                }
            }
        }
        for i in dilate(&mut values, &mut filled, dilation) {
            status[i] = TexelStatus::Dilated;
        }
        out.textures.push(values);
        out.coverage.push(tex.coverage);
        out.reports.push(CoverageReport::from_status(k, status));
    }
    Ok(out)
}

/// Linear per-texel interpolation between consecutive keyframes, inserting
/// `interval - 1` textures between each pair. Keyframes are returned as is.
pub fn interpolate_keyframes(keyframes: &[Grid], interval: usize) -> Result<Vec<Grid>> {
    if interval == 0 {
        return Err(Error::invalid("interval must be >= 1"));
    }
    if keyframes.is_empty() {
        return Err(Error::invalid("no keyframes to interpolate"));
    }
    if interval > 1 && keyframes.len() < 2 {
        return Err(Error::invalid("interpolation needs at least two keyframes"));
    }
    for k in &keyframes[1..] {
        keyframes[0].ensure_shape(k)?;
    }
    let mut out = Vec::with_capacity((keyframes.len() - 1) * interval + 1);
    for (i, a) in keyframes.iter().enumerate() {
        out.push(a.clone());
        let Some(b) = keyframes.get(i + 1) else { break };
        for j in 1..interval {
            let s = j as f64 / interval as f64;
            out.push(a.zip_map(b, |x, y| x * (1.0 - s) + y * s)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_one_is_identity() {
        let k = vec![Grid::filled(1, 2, 2, 0.3), Grid::filled(1, 2, 2, 0.9)];
        assert_eq!(interpolate_keyframes(&k, 1).unwrap(), k);
    }

    #[test]
    fn quarter_steps() {
        let k = vec![Grid::filled(1, 2, 2, 0.0), Grid::filled(1, 2, 2, 1.0)];
        let out = interpolate_keyframes(&k, 4).unwrap();
        let mids: Vec<f32> = out.iter().map(|g| g.data()[0]).collect();
        assert_eq!(mids, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn keyframes_preserved_bitwise() {
        let k: Vec<Grid> = (0..4)
            .map(|i| {
                Grid::from_fn(3, 4, 4, |c, y, x| {
                    ((i * 7 + c * 3 + y + x) as f32 * 0.137).sin()
                })
            })
            .collect();
        let out = interpolate_keyframes(&k, 3).unwrap();
        assert_eq!(out.len(), 10);
        for (i, key) in k.iter().enumerate() {
            assert_eq!(&out[i * 3], key);
        }
    }

    #[test]
    fn single_keyframe_needs_unit_interval() {
        let k = vec![Grid::filled(1, 1, 1, 0.5)];
        assert!(matches!(
            interpolate_keyframes(&k, 3),
            Err(Error::InvalidArgument(_))
        ));
        assert_eq!(interpolate_keyframes(&k, 1).unwrap(), k);
        assert!(interpolate_keyframes(&k, 0).is_err());
    }
}
