//! The inverse rendering operator.
//!
//! Every atlas texel is mapped to its surface point, projected into the view,
//! and kept when it faces the camera, lands inside the frame and is not
//! hidden. Hidden means: some triangle found in the 3x3 neighborhood of the
//! projected sample in the supersampled id buffer intersects the
//! camera-to-point ray more than `depth_eps` (view depth) in front of the
//! point. The intersection is computed exactly against that triangle, which
//! avoids the self-shadowing a plain depth-map comparison suffers at oblique
//! angles.
//!
//! All of that depends only on geometry and camera, so it is computed once
//! into a [`VisibilityMap`] and reused for every latent that passes through
//! the same (view, frame).

use crate::error::{Error, Result};
use crate::geometry::{Camera, MeshFrame, Vec3};
use crate::grid::Grid;
use crate::par::Execution;

use super::buffers::{render_buffers, RenderBuffers};
use super::rasterize::{IdBuffer, NEAR, NO_TRIANGLE};
use super::sample::bilinear_taps;
use super::uv_raster::UvRaster;
use super::RasterConfig;

/// One view's contribution in UV space.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialTexture {
    /// `C x R x R`; zero wherever `weight` is zero.
    pub values: Grid,
    /// `1 x R x R`; the raw view cosine of each visible texel.
    pub weight: Grid,
}

impl PartialTexture {
    pub fn resolution(&self) -> usize {
        self.weight.width()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    texel: u32,
    cosine: f32,
    taps: [(u32, f32); 4],
}

/// Cached texel-to-pixel correspondence for one (view, frame).
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityMap {
    uv_resolution: usize,
    image: (usize, usize),
    entries: Vec<Entry>,
}

const CHUNK: usize = 4096;

impl VisibilityMap {
    /// `depth_eps` is an absolute view-depth tolerance in scene units.
    pub fn build(
        frame: &MeshFrame<'_>,
        buffers: &RenderBuffers,
        uv: &UvRaster,
        depth_eps: f64,
        exec: Execution,
    ) -> Self {
        let r = uv.resolution();
        let n = r * r;
        let chunks = n.div_ceil(CHUNK);
        let parts: Vec<Vec<Entry>> = exec.map(chunks, |ci| {
            let mut out = Vec::new();
            for texel in ci * CHUNK..((ci + 1) * CHUNK).min(n) {
                if let Some(e) = visible_entry(frame, buffers, uv, depth_eps, texel) {
                    out.push(e);
                }
            }
            out
        });
        Self {
            uv_resolution: r,
            image: buffers.resolution(),
            entries: parts.concat(),
        }
    }

    pub fn uv_resolution(&self) -> usize {
        self.uv_resolution
    }

    pub fn visible_count(&self) -> usize {
        self.entries.len()
    }

    /// `(texel index, cosine)` of every visible texel.
    pub fn visible(&self) -> impl Iterator<Item = (usize, f32)> + '_ {
        self.entries.iter().map(|e| (e.texel as usize, e.cosine))
    }

    /// Un-projects an image (`C x H x W`, at the buffers' resolution).
    pub fn unproject(&self, grid: &Grid, exec: Execution) -> Result<PartialTexture> {
        let (w, h) = self.image;
        if grid.height() != h || grid.width() != w {
            return Err(Error::shape((grid.channels(), h, w), grid.shape()));
        }
        let r = self.uv_resolution;
        let mut values = Grid::zeros(grid.channels(), r, r);
        let mut weight = Grid::zeros(1, r, r);
        for e in &self.entries {
            weight.data_mut()[e.texel as usize] = e.cosine;
        }
        exec.for_each_chunk(values.data_mut(), r * r, |c, plane| {
            let src = grid.plane(c);
            for e in &self.entries {
                let (mut acc, mut wsum) = (0.0f64, 0.0f64);
                for &(p, wt) in &e.taps {
                    acc += wt as f64 * src[p as usize] as f64;
                    wsum += wt as f64;
                }
                plane[e.texel as usize] = (acc / wsum) as f32;
            }
        });
        Ok(PartialTexture { values, weight })
    }
}

fn visible_entry(
    frame: &MeshFrame<'_>,
    buffers: &RenderBuffers,
    uv: &UvRaster,
    depth_eps: f64,
    texel: usize,
) -> Option<Entry> {
    let (tri, b) = uv.texel(texel)?;
    let [pa, pb, pc] = frame.triangle(tri);
    let [na, nb, nc] = frame.triangle_normals(tri);
    let point: Vec3 = pa * b[0] + pb * b[1] + pc * b[2];
    let normal: Vec3 = na * b[0] + nb * b[1] + nc * b[2];

    let camera = &buffers.camera;
    let (w, h) = buffers.resolution();
    let pr = camera.project(&point, w, h);
    if !(pr.depth > NEAR) || !(0.0..w as f64).contains(&pr.x) || !(0.0..h as f64).contains(&pr.y) {
        return None;
    }
    let to_cam = camera.position() - point;
    if normal.norm() == 0.0 {
        return None;
    }
    let cosine = normal.normalize().dot(&to_cam.normalize());
    if !(cosine > 0.0) {
        return None;
    }
    if occluded(
        frame,
        &buffers.ids,
        camera.position(),
        point,
        tri,
        pr.x,
        pr.y,
        pr.depth,
        depth_eps,
    ) {
        return None;
    }

    // Bilinear taps restricted to foreground pixels, renormalized.
    let mut taps = [(0u32, 0f32); 4];
    let mut total = 0.0;
    for (slot, (p, wt)) in taps.iter_mut().zip(bilinear_taps(pr.x, pr.y, w, h)) {
        let wt = if buffers.is_foreground(p) { wt } else { 0.0 };
        *slot = (p as u32, wt as f32);
        total += wt;
    }
    if !(total > 0.0) {
        return None;
    }
    for t in &mut taps {
        t.1 = (t.1 as f64 / total) as f32;
    }
    Some(Entry {
        texel: texel as u32,
        cosine: cosine as f32,
        taps,
    })
}

#[allow(clippy::too_many_arguments)]
fn occluded(
    frame: &MeshFrame<'_>,
    ids: &IdBuffer,
    origin: Vec3,
    point: Vec3,
    own: usize,
    x: f64,
    y: f64,
    depth: f64,
    depth_eps: f64,
) -> bool {
    let s = ids.scale as f64;
    let (sw, sh) = (ids.sample_width() as i64, ids.sample_height() as i64);
    let sx = ((x * s).floor() as i64).clamp(0, sw - 1);
    let sy = ((y * s).floor() as i64).clamp(0, sh - 1);
    let limit = 1.0 - depth_eps / depth;
    let dir = point - origin;
    let mut seen = [NO_TRIANGLE; 9];
    let mut n = 0;
    for yy in (sy - 1).max(0)..=(sy + 1).min(sh - 1) {
        for xx in (sx - 1).max(0)..=(sx + 1).min(sw - 1) {
            let t = ids.tri[(yy * sw + xx) as usize];
            if t == NO_TRIANGLE || t as usize == own || seen[..n].contains(&t) {
                continue;
            }
            seen[n] = t;
            n += 1;
            if let Some(hit) = ray_triangle(origin, dir, frame.triangle(t as usize)) {
                if hit > 0.0 && hit < limit {
                    return true;
                }
            }
        }
    }
    false
}

/// Ray parameter of the intersection of `origin + t * dir` with a triangle.
fn ray_triangle(origin: Vec3, dir: Vec3, [v0, v1, v2]: [Vec3; 3]) -> Option<f64> {
    const EPS: f64 = 1e-9;
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < f64::MIN_POSITIVE {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = origin - v0;
    let u = tvec.dot(&pvec) * inv;
    if !(-EPS..=1.0 + EPS).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv;
    if v < -EPS || u + v > 1.0 + EPS {
        return None;
    }
    Some(e2.dot(&qvec) * inv)
}

/// Un-projects `grid` seen from `camera` onto an `R x R` atlas of `frame`.
/// `depth_tolerance` is relative to the frame's bounding-box diagonal.
pub fn unproject(
    grid: &Grid,
    mesh: &crate::geometry::MeshSequence,
    frame_index: usize,
    camera: &Camera,
    uv_resolution: usize,
    depth_tolerance: f64,
) -> Result<PartialTexture> {
    if uv_resolution < 1 {
        return Err(Error::invalid("uv resolution must be >= 1"));
    }
    let cfg = RasterConfig {
        depth_tolerance,
        ..RasterConfig::default()
    };
    let frame = mesh.frame(frame_index);
    let buffers = render_buffers(&frame, camera, (grid.width(), grid.height()), &cfg)?;
    let uv = UvRaster::build(mesh, uv_resolution, cfg.execution);
    let eps = depth_tolerance * frame.aabb().diagonal();
    VisibilityMap::build(&frame, &buffers, &uv, eps, cfg.execution).unproject(grid, cfg.execution)
}
