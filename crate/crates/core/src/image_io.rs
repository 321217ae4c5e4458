//! PNG export for grids and masks.

use std::path::Path;

use image::{GrayImage, RgbImage};

use crate::error::Result;
use crate::grid::Grid;

#[inline]
fn to_u8(v: f32, lo: f32, hi: f32) -> u8 {
    let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
    (t.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn save_gray_png(
    path: impl AsRef<Path>,
    plane: &[f32],
    width: usize,
    height: usize,
    lo: f32,
    hi: f32,
) -> Result<()> {
    let img = GrayImage::from_fn(width as u32, height as u32, |x, y| {
        image::Luma([to_u8(plane[y as usize * width + x as usize], lo, hi)])
    });
    img.save(path)?;
    Ok(())
}

/// First three channels as RGB (a single channel is replicated), mapping
/// `[lo, hi]` to `[0, 255]`.
pub fn save_grid_png(path: impl AsRef<Path>, grid: &Grid, lo: f32, hi: f32) -> Result<()> {
    let (c, h, w) = grid.shape();
    let ch = |k: usize| if c >= 3 { k } else { 0 };
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        image::Rgb([0, 1, 2].map(|k| to_u8(grid.get(ch(k), y, x), lo, hi)))
    });
    img.save(path)?;
    Ok(())
}

/// Loads a PNG (or any format the `image` crate decodes) as a `3 x H x W`
/// grid with values in `[0, 1]`.
pub fn load_rgb_grid(path: impl AsRef<Path>) -> Result<Grid> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Grid::from_fn(3, h, w, |c, y, x| {
        img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    }))
}
