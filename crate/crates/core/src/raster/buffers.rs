use crate::error::{Error, Result};
use crate::geometry::{Camera, MeshFrame, Vec3};
use crate::grid::Grid;
use crate::par::Execution;

use super::rasterize::{project_triangle, rasterize, IdBuffer, NO_TRIANGLE};
use super::sample::sample_texture;
use super::RasterConfig;

/// Everything one (view, frame) rasterization provides.
///
/// `depth`, `cosine`, `fg_mask` and `texel_map` are at the requested pixel
/// resolution. A pixel is foreground when any of its `supersample^2`
/// samples is covered; `fg_mask` is the covered fraction. Per-pixel
/// attributes come from the pixel center when it is covered, otherwise from
/// the covered sample nearest to it.
#[derive(Debug, Clone)]
pub struct RenderBuffers {
    pub camera: Camera,
    /// View depth; `+inf` on background.
    pub depth: Grid,
    /// `max(0, n . v)` with `v` pointing from the surface toward the camera.
    pub cosine: Grid,
    pub fg_mask: Grid,
    /// Interpolated `(u, v)` per pixel, row-major; zero on background.
    pub texel_map: Vec<[f64; 2]>,
    /// Supersampled id/depth buffer backing the visibility test.
    pub ids: IdBuffer,
}

impl RenderBuffers {
    pub fn width(&self) -> usize {
        self.depth.width()
    }
    pub fn height(&self) -> usize {
        self.depth.height()
    }
    pub fn resolution(&self) -> (usize, usize) {
        (self.width(), self.height())
    }
    pub fn is_foreground(&self, pixel: usize) -> bool {
        self.fg_mask.data()[pixel] > 0.0
    }
}

pub fn render_buffers(
    frame: &MeshFrame<'_>,
    camera: &Camera,
    resolution: (usize, usize),
    cfg: &RasterConfig,
) -> Result<RenderBuffers> {
    let (w, h) = resolution;
    if w == 0 || h == 0 {
        return Err(Error::invalid("render resolution must be positive"));
    }
    let s = cfg.supersample.max(1);
    let ids = rasterize(frame, camera, w, h, s, cfg.execution);
    let centers = if s == 1 {
        None
    } else {
        Some(rasterize(frame, camera, w, h, 1, cfg.execution))
    };
    let center_ids = centers.as_ref().unwrap_or(&ids);

    struct Px {
        mask: f32,
        depth: f32,
        cosine: f32,
        uv: [f64; 2],
    }
    let background = Px {
        mask: 0.0,
        depth: f32::INFINITY,
        cosine: 0.0,
        uv: [0.0, 0.0],
    };
    let cam_pos = camera.position();
    let pixels: Vec<Px> = cfg.execution.map(w * h, |p| {
        let (px, py) = (p % w, p / w);
        let sw = w * s;
        let mut count = 0usize;
        let mut nearest: Option<(f64, usize)> = None;
        for sy in py * s..(py + 1) * s {
            for sx in px * s..(px + 1) * s {
                let i = sy * sw + sx;
                if ids.tri[i] == NO_TRIANGLE {
                    continue;
                }
                count += 1;
                let (cx, cy) = ids.sample_center(sx, sy);
                let d2 = (cx - px as f64 - 0.5).powi(2) + (cy - py as f64 - 0.5).powi(2);
                if nearest.is_none_or(|(best, _)| d2 < best) {
                    nearest = Some((d2, i));
                }
            }
        }
        if count == 0 {
            return Px { ..background };
        }
        let (tri, pos) = if center_ids.tri[p] != NO_TRIANGLE {
            (
                center_ids.tri[p] as usize,
                (px as f64 + 0.5, py as f64 + 0.5),
            )
        } else {
            let i = nearest.expect("covered sample").1;
            (ids.tri[i] as usize, ids.sample_center(i % sw, i / sw))
        };
        let st =
            project_triangle(frame, camera, w, h, 1, tri).expect("rasterized triangle projects");
        let (b, depth) = st.perspective(st.barycentric(pos));
        let [pa, pb, pc] = frame.triangle(tri);
        let [na, nb, nc] = frame.triangle_normals(tri);
        let uv = frame.uvs[tri];
        let point: Vec3 = pa * b[0] + pb * b[1] + pc * b[2];
        let normal: Vec3 = na * b[0] + nb * b[1] + nc * b[2];
        let to_cam = cam_pos - point;
        let cosine = if normal.norm() > 0.0 && to_cam.norm() > 0.0 {
            normal.normalize().dot(&to_cam.normalize()).max(0.0)
        } else {
            0.0
        };
        Px {
            mask: count as f32 / (s * s) as f32,
            depth: depth as f32,
            cosine: cosine as f32,
            uv: [
                b[0] * uv[0].x + b[1] * uv[1].x + b[2] * uv[2].x,
                b[0] * uv[0].y + b[1] * uv[1].y + b[2] * uv[2].y,
            ],
        }
    });

    let mut depth = Grid::zeros(1, h, w);
    let mut cosine = Grid::zeros(1, h, w);
    let mut fg_mask = Grid::zeros(1, h, w);
    let mut texel_map = Vec::with_capacity(w * h);
    for (i, px) in pixels.into_iter().enumerate() {
        depth.data_mut()[i] = px.depth;
        cosine.data_mut()[i] = px.cosine;
        fg_mask.data_mut()[i] = px.mask;
        texel_map.push(px.uv);
    }
    Ok(RenderBuffers {
        camera: camera.with_resolution(resolution)?,
        depth,
        cosine,
        fg_mask,
        texel_map,
        ids,
    })
}

/// Forward rendering: samples `texture` (`C x R x R`) at each foreground
/// pixel's UV. Background pixels are zero; silhouette pixels carry the pure
/// foreground value (compositing applies the fractional mask).
pub fn render_texture(texture: &Grid, buffers: &RenderBuffers, exec: Execution) -> Result<Grid> {
    if texture.width() == 0 || texture.width() != texture.height() {
        return Err(Error::shape("square texture", texture.shape()));
    }
    let (w, h) = buffers.resolution();
    let mut out = Grid::zeros(texture.channels(), h, w);
    let uvs = &buffers.texel_map;
    let mask = buffers.fg_mask.data();
    exec.for_each_chunk(out.data_mut(), w, |row, line| {
        let c = row / h;
        let y = row % h;
        for (x, o) in line.iter_mut().enumerate() {
            let i = y * w + x;
            if mask[i] > 0.0 {
                *o = sample_texture(texture, c, uvs[i][0], uvs[i][1]) as f32;
            }
        }
    });
    Ok(out)
}
