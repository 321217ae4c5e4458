//! Debug dumps of render buffers as PNG images and raw grids.

use std::path::Path;

use crate::error::Result;
use crate::grid::{save_grid, Grid};
use crate::image_io::save_gray_png;

use super::RenderBuffers;

/// Writes `<prefix>_{depth,cosine,mask}.png` and the matching `.grid` files.
/// Depth images are normalized over the foreground depth range, near = white.
pub fn dump_buffers(buffers: &RenderBuffers, dir: impl AsRef<Path>, prefix: &str) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let (w, h) = buffers.resolution();

    let fg: Vec<f32> = buffers
        .depth
        .data()
        .iter()
        .copied()
        .filter(|d| d.is_finite())
        .collect();
    let (lo, hi) = fg
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &d| {
            (a.min(d), b.max(d))
        });
    let depth_img: Vec<f32> = buffers
        .depth
        .data()
        .iter()
        .map(|&d| {
            if !d.is_finite() {
                0.0
            } else if hi > lo {
                1.0 - 0.8 * (d - lo) / (hi - lo)
            } else {
                1.0
            }
        })
        .collect();
    save_gray_png(
        dir.join(format!("{prefix}_depth.png")),
        &depth_img,
        w,
        h,
        0.0,
        1.0,
    )?;
    save_gray_png(
        dir.join(format!("{prefix}_cosine.png")),
        buffers.cosine.data(),
        w,
        h,
        0.0,
        1.0,
    )?;
    save_gray_png(
        dir.join(format!("{prefix}_mask.png")),
        buffers.fg_mask.data(),
        w,
        h,
        0.0,
        1.0,
    )?;

    for (name, g) in [
        ("depth", &buffers.depth),
        ("cosine", &buffers.cosine),
        ("mask", &buffers.fg_mask),
    ] {
        save_grid(
            dir.join(format!("{prefix}_{name}.grid")),
            g,
            Default::default(),
        )?;
    }
    let uv = Grid::from_fn(2, h, w, |c, y, x| buffers.texel_map[y * w + x][c] as f32);
    save_grid(
        dir.join(format!("{prefix}_uv.grid")),
        &uv,
        Default::default(),
    )?;
    Ok(())
}
