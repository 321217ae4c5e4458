//! Bilinear sampling with clamped borders.

use crate::grid::Grid;

use super::uv_raster::uv_to_texel;

/// Four bilinear taps `(index, weight)` around continuous position `(x, y)`
/// (cell centers at half-integers) on a `width x height` lattice.
#[inline]
pub fn bilinear_taps(x: f64, y: f64, width: usize, height: usize) -> [(usize, f64); 4] {
    let fx = (x - 0.5).clamp(0.0, (width - 1) as f64);
    let fy = (y - 0.5).clamp(0.0, (height - 1) as f64);
    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(width - 1), (y0 + 1).min(height - 1));
    let (ax, ay) = (fx - x0 as f64, fy - y0 as f64);
    [
        (y0 * width + x0, (1.0 - ax) * (1.0 - ay)),
        (y0 * width + x1, ax * (1.0 - ay)),
        (y1 * width + x0, (1.0 - ax) * ay),
        (y1 * width + x1, ax * ay),
    ]
}

/// Samples channel `c` of a square `C x R x R` texture at `(u, v)`.
#[inline]
pub fn sample_texture(tex: &Grid, c: usize, u: f64, v: f64) -> f64 {
    let (x, y) = uv_to_texel(u, v, tex.width());
    let plane = tex.plane(c);
    bilinear_taps(x, y, tex.width(), tex.height())
        .iter()
        .map(|&(i, w)| w * plane[i] as f64)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taps_sum_to_one_and_hit_centers() {
        let t = bilinear_taps(2.5, 1.5, 4, 4);
        assert_eq!(t[0], (1 * 4 + 2, 1.0));
        for (x, y) in [(0.1, 0.2), (3.9, 0.0), (1.7, 2.2)] {
            let s: f64 = bilinear_taps(x, y, 4, 4).iter().map(|t| t.1).sum();
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn texture_sampling_is_linear_between_centers() {
        let tex = Grid::from_fn(1, 2, 2, |_, _, x| x as f32);
        // Halfway between the two column centers.
        assert!((sample_texture(&tex, 0, 0.5, 0.5) - 0.5).abs() < 1e-12);
        // Clamped beyond the last center.
        assert_eq!(sample_texture(&tex, 0, 0.99, 0.5), 1.0);
    }
}
