use crate::error::{Error, Result, ResultExt};
use crate::geometry::{CameraRig, MeshSequence};
use crate::grid::Grid;
use crate::par::Execution;
use crate::raster::{
    render_buffers, render_texture, PartialTexture, RasterConfig, RenderBuffers, UvRaster,
    VisibilityMap,
};

/// Geometry-only precomputation shared by every step: render buffers and
/// texel visibility for every (view, frame), plus the atlas raster.
#[derive(Debug, Clone)]
pub struct Scene {
    pub meshes: MeshSequence,
    pub rig: CameraRig,
    pub latent_resolution: usize,
    pub uv: UvRaster,
    /// `[view][frame]`.
    pub buffers: Vec<Vec<RenderBuffers>>,
    /// `[view][frame]`.
    pub visibility: Vec<Vec<VisibilityMap>>,
    pub raster: RasterConfig,
}

impl Scene {
    pub fn prepare(
        meshes: &MeshSequence,
        rig: &CameraRig,
        latent_resolution: usize,
        uv_resolution: usize,
        raster: &RasterConfig,
    ) -> Result<Self> {
        if latent_resolution < 1 || uv_resolution < 1 {
            return Err(Error::invalid("resolutions must be >= 1"));
        }
        let exec = raster.execution;
        let uv = UvRaster::build(meshes, uv_resolution, exec);
        let eps = raster.depth_tolerance * meshes.aabb().diagonal();
        let (v_count, k_count) = (rig.len(), meshes.frame_count());
        let mut pairs = exec
            .try_map(v_count * k_count, |i| {
                let (v, k) = (i / k_count, i % k_count);
                let frame = meshes.frame(k);
                let inner = RasterConfig {
                    execution: Execution::Sequential,
                    ..*raster
                };
                let b = render_buffers(
                    &frame,
                    rig.get(v),
                    (latent_resolution, latent_resolution),
                    &inner,
                )
                .context(|| format!("view {v}, frame {k}"))?;
                let vis = VisibilityMap::build(&frame, &b, &uv, eps, Execution::Sequential);
                Ok::<_, Error>((b, vis))
            })?
            .into_iter();
        let mut buffers = Vec::with_capacity(v_count);
        let mut visibility = Vec::with_capacity(v_count);
        for _ in 0..v_count {
            let (b, vis): (Vec<_>, Vec<_>) = pairs.by_ref().take(k_count).unzip();
            buffers.push(b);
            visibility.push(vis);
        }
        Ok(Self {
            meshes: meshes.clone(),
            rig: rig.clone(),
            latent_resolution,
            uv,
            buffers,
            visibility,
            raster: *raster,
        })
    }

    pub fn view_count(&self) -> usize {
        self.rig.len()
    }

    pub fn frame_count(&self) -> usize {
        self.meshes.frame_count()
    }

    pub fn uv_resolution(&self) -> usize {
        self.uv.resolution()
    }

    pub fn render(&self, texture: &Grid, view: usize, frame: usize) -> Result<Grid> {
        render_texture(texture, &self.buffers[view][frame], Execution::Sequential)
    }

    pub fn unproject(&self, image: &Grid, view: usize, frame: usize) -> Result<PartialTexture> {
        self.visibility[view][frame].unproject(image, Execution::Sequential)
    }

    /// Foreground mask of `(view, frame)` as `1 x H x W`.
    pub fn mask(&self, view: usize, frame: usize) -> &Grid {
        &self.buffers[view][frame].fg_mask
    }

    pub fn depth(&self, view: usize, frame: usize) -> &Grid {
        &self.buffers[view][frame].depth
    }
}
