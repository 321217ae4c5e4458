//! Z-buffered triangle rasterization into an id/depth buffer.
//!
//! Coverage uses an inclusive edge test with canonically ordered edge
//! evaluation, so triangles sharing an edge never leave a gap between them;
//! double-covered samples are resolved by the depth test, first triangle
//! winning ties. The image is split into row bands that each walk the full
//! triangle list in order, which makes the output independent of the
//! execution policy.

use crate::geometry::{Camera, MeshFrame, Vec3};
use crate::par::Execution;

pub const NO_TRIANGLE: u32 = u32::MAX;

/// Smallest view depth a vertex may have to be rasterized. Triangles that
/// cross the near plane are dropped rather than clipped.
pub const NEAR: f64 = 1e-6;

const BAND_ROWS: usize = 16;

/// Per-sample triangle id and view depth at `scale x scale` samples per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct IdBuffer {
    /// Base (pixel) resolution.
    pub width: usize,
    pub height: usize,
    /// Samples per pixel along each axis.
    pub scale: usize,
    pub tri: Vec<u32>,
    pub depth: Vec<f64>,
}

impl IdBuffer {
    pub fn sample_width(&self) -> usize {
        self.width * self.scale
    }
    pub fn sample_height(&self) -> usize {
        self.height * self.scale
    }
    /// Sample center in base pixel coordinates.
    pub fn sample_center(&self, sx: usize, sy: usize) -> (f64, f64) {
        let s = self.scale as f64;
        ((sx as f64 + 0.5) / s, (sy as f64 + 0.5) / s)
    }
}

/// A triangle projected into sample space.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScreenTri {
    pub p: [(f64, f64); 3],
    pub depth: [f64; 3],
    pub area: f64,
}

/// Edge function evaluated with a canonical endpoint order so that two
/// triangles sharing an edge get exactly opposite values.
#[inline]
pub(crate) fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    let (lo, hi, sign) = if a <= b { (a, b, 1.0) } else { (b, a, -1.0) };
    sign * ((hi.0 - lo.0) * (p.1 - lo.1) - (hi.1 - lo.1) * (p.0 - lo.0))
}

impl ScreenTri {
    /// Screen-space barycentrics if `p` is covered (inclusive), normalized to sum 1.
    #[inline]
    pub fn coverage(&self, p: (f64, f64)) -> Option<[f64; 3]> {
        let [a, b, c] = self.p;
        let w = [edge(b, c, p), edge(c, a, p), edge(a, b, p)];
        if self.area > 0.0 {
            (w[0] >= 0.0 && w[1] >= 0.0 && w[2] >= 0.0)
                .then(|| [w[0] / self.area, w[1] / self.area, w[2] / self.area])
        } else {
            (w[0] <= 0.0 && w[1] <= 0.0 && w[2] <= 0.0)
                .then(|| [w[0] / self.area, w[1] / self.area, w[2] / self.area])
        }
    }

    /// Perspective-correct barycentrics from screen-space ones.
    #[inline]
    pub fn perspective(&self, b: [f64; 3]) -> ([f64; 3], f64) {
        let q = [
            b[0] / self.depth[0],
            b[1] / self.depth[1],
            b[2] / self.depth[2],
        ];
        let inv = q[0] + q[1] + q[2];
        ([q[0] / inv, q[1] / inv, q[2] / inv], 1.0 / inv)
    }

    /// Same as [`ScreenTri::coverage`] but without the inside test.
    #[inline]
    pub fn barycentric(&self, p: (f64, f64)) -> [f64; 3] {
        let [a, b, c] = self.p;
        [
            edge(b, c, p) / self.area,
            edge(c, a, p) / self.area,
            edge(a, b, p) / self.area,
        ]
    }
}

/// Projects triangle `f` into an image of `width*scale x height*scale` samples.
/// Returns `None` for triangles behind or crossing the near plane, or with zero area.
pub(crate) fn project_triangle(
    frame: &MeshFrame<'_>,
    camera: &Camera,
    width: usize,
    height: usize,
    scale: usize,
    f: usize,
) -> Option<ScreenTri> {
    let verts: [Vec3; 3] = frame.triangle(f);
    let s = scale as f64;
    let mut p = [(0.0, 0.0); 3];
    let mut depth = [0.0; 3];
    for i in 0..3 {
        let pr = camera.project(&verts[i], width, height);
        if !(pr.depth > NEAR) {
            return None;
        }
        p[i] = (pr.x * s, pr.y * s);
        depth[i] = pr.depth;
    }
    let area = edge(p[0], p[1], p[2]);
    (area != 0.0 && area.is_finite()).then_some(ScreenTri { p, depth, area })
}

pub fn rasterize(
    frame: &MeshFrame<'_>,
    camera: &Camera,
    width: usize,
    height: usize,
    scale: usize,
    exec: Execution,
) -> IdBuffer {
    let scale = scale.max(1);
    let (sw, sh) = (width * scale, height * scale);
    let tris: Vec<Option<ScreenTri>> = (0..frame.face_count())
        .map(|f| project_triangle(frame, camera, width, height, scale, f))
        .collect();

    let mut samples = vec![(NO_TRIANGLE, f64::INFINITY); sw * sh];
    exec.for_each_chunk(&mut samples, BAND_ROWS * sw, |band, out| {
        let y0 = band * BAND_ROWS;
        let rows = out.len() / sw;
        for (f, tri) in tris.iter().enumerate() {
            let Some(tri) = tri else { continue };
            let (xmin, xmax, ymin, ymax) = bounds(tri, sw, sh);
            let ylo = ymin.max(y0);
            let yhi = ymax.min(y0 + rows);
            for sy in ylo..yhi {
                for sx in xmin..xmax {
                    let p = (sx as f64 + 0.5, sy as f64 + 0.5);
                    let Some(b) = tri.coverage(p) else { continue };
                    let (_, z) = tri.perspective(b);
                    let slot = &mut out[(sy - y0) * sw + sx];
                    if z < slot.1 {
                        *slot = (f as u32, z);
                    }
                }
            }
        }
    });

    let (tri, depth) = samples.into_iter().unzip();
    IdBuffer {
        width,
        height,
        scale,
        tri,
        depth,
    }
}

/// Sample index range `[xmin, xmax) x [ymin, ymax)` whose centers may be covered.
#[inline]
pub(crate) fn bounds(tri: &ScreenTri, sw: usize, sh: usize) -> (usize, usize, usize, usize) {
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in &tri.p {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let lo = |v: f64, n: usize| ((v - 0.5).ceil().max(0.0) as usize).min(n);
    let hi = |v: f64, n: usize| (((v - 0.5).floor() + 1.0).max(0.0) as usize).min(n);
    (lo(x0, sw), hi(x1, sw), lo(y0, sh), hi(y1, sh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;

    fn front_camera(res: usize) -> Camera {
        Camera::new(
            Vec3::new(0.0, 0.0, 3.0),
            Vec3::zeros(),
            Vec3::y(),
            0.9,
            (res, res),
        )
        .unwrap()
    }

    #[test]
    fn shared_diagonal_has_no_gaps() {
        // A quad that exactly fills the frame puts sample centers on the diagonal.
        let cam = front_camera(32);
        let half = 3.0 * (0.45f64).tan();
        let q = primitives::quad(2.0 * half, 2.0 * half);
        let ids = rasterize(&q.frame(0), &cam, 32, 32, 1, Execution::Sequential);
        assert!(ids.tri.iter().all(|&t| t != NO_TRIANGLE));
    }

    #[test]
    fn bands_match_sequential() {
        let cam = front_camera(50);
        let s = primitives::uv_sphere(1.0, 17, 9);
        let a = rasterize(&s.frame(0), &cam, 50, 50, 2, Execution::Sequential);
        let b = rasterize(&s.frame(0), &cam, 50, 50, 2, Execution::Parallel);
        assert_eq!(a, b);
    }

    #[test]
    fn depth_is_view_axis_distance() {
        let cam = front_camera(16);
        let q = primitives::quad(1.0, 1.0);
        let ids = rasterize(&q.frame(0), &cam, 16, 16, 1, Execution::Sequential);
        for (&t, &d) in ids.tri.iter().zip(&ids.depth) {
            if t != NO_TRIANGLE {
                assert!((d - 3.0).abs() < 1e-12);
            }
        }
    }
}
