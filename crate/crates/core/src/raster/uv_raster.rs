//! Texture-space rasterization: which surface point each texel belongs to.

use crate::geometry::MeshSequence;
use crate::par::Execution;

use super::rasterize::{edge, NO_TRIANGLE};

/// Texel `(row, col)` of an `R x R` atlas sits at `u = (col + 0.5) / R`,
/// `v = 1 - (row + 0.5) / R` (UV origin bottom-left, rows top-down).
#[inline]
pub fn texel_uv(row: usize, col: usize, resolution: usize) -> (f64, f64) {
    let r = resolution as f64;
    ((col as f64 + 0.5) / r, 1.0 - (row as f64 + 0.5) / r)
}

/// Continuous texel coordinates `(x, y)` of a UV point.
#[inline]
pub fn uv_to_texel(u: f64, v: f64, resolution: usize) -> (f64, f64) {
    let r = resolution as f64;
    (u * r, (1.0 - v) * r)
}

/// Triangle and barycentric coordinates for every texel covered by the atlas.
/// Shared by all frames of a sequence since the UV layout is.
#[derive(Debug, Clone, PartialEq)]
pub struct UvRaster {
    resolution: usize,
    tri: Vec<u32>,
    bary: Vec<[f64; 3]>,
}

impl UvRaster {
    pub fn build(mesh: &MeshSequence, resolution: usize, exec: Execution) -> Self {
        let r = resolution;
        let tris: Vec<[(f64, f64); 3]> = mesh
            .uvs()
            .iter()
            .map(|t| t.map(|uv| uv_to_texel(uv.x, uv.y, r)))
            .collect();
        let mut cells = vec![(NO_TRIANGLE, [0.0; 3]); r * r];
        exec.for_each_chunk(&mut cells, r.max(1), |row, out| {
            let py = row as f64 + 0.5;
            for (f, t) in tris.iter().enumerate() {
                let [a, b, c] = *t;
                let area = edge(a, b, c);
                if area == 0.0 {
                    continue;
                }
                let (ymin, ymax) = (a.1.min(b.1).min(c.1), a.1.max(b.1).max(c.1));
                if py < ymin || py > ymax {
                    continue;
                }
                let xmin = a.0.min(b.0).min(c.0);
                let xmax = a.0.max(b.0).max(c.0);
                let lo = ((xmin - 0.5).ceil().max(0.0) as usize).min(r);
                let hi = (((xmax - 0.5).floor() + 1.0).max(0.0) as usize).min(r);
                for col in lo..hi {
                    if out[col].0 != NO_TRIANGLE {
                        continue;
                    }
                    let p = (col as f64 + 0.5, py);
                    let w = [
                        edge(b, c, p) / area,
                        edge(c, a, p) / area,
                        edge(a, b, p) / area,
                    ];
                    if w.iter().all(|&x| x >= 0.0) {
                        out[col] = (f as u32, w);
                    }
                }
            }
        });
        let (tri, bary) = cells.into_iter().unzip();
        Self {
            resolution,
            tri,
            bary,
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// `(triangle, barycentrics)` for texel index `i`, if covered.
    #[inline]
    pub fn texel(&self, i: usize) -> Option<(usize, [f64; 3])> {
        (self.tri[i] != NO_TRIANGLE).then(|| (self.tri[i] as usize, self.bary[i]))
    }

    pub fn covered(&self) -> impl Iterator<Item = bool> + '_ {
        self.tri.iter().map(|&t| t != NO_TRIANGLE)
    }

    pub fn covered_count(&self) -> usize {
        self.covered().filter(|&c| c).count()
    }
}
