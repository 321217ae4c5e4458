#![allow(dead_code)]

use std::f64::consts::PI;

use uvsync::geometry::{primitives, Camera, CameraRig, MeshSequence, Vec2, Vec3};
use uvsync::grid::Grid;
use uvsync::raster::texel_uv;

/// Smooth, seam-continuous RGB field on the lat-long sphere atlas.
pub fn smooth_sphere_texture(r: usize) -> Grid {
    Grid::from_fn(3, r, r, |c, y, x| {
        let (u, v) = texel_uv(y, x, r);
        let phase = c as f64 * 2.0 * PI / 3.0;
        (0.5 + 0.15 * (2.0 * PI * u + phase).sin() * (PI * v).sin() + 0.1 * (PI * v).cos()) as f32
    })
}

pub fn sphere() -> MeshSequence {
    primitives::uv_sphere(0.6, 64, 32)
}

/// `count` cameras on the equator at uniform azimuths, all at `radius`.
pub fn ring(count: usize, radius: f64, fov_deg: f64, res: usize) -> CameraRig {
    let cams = (0..count)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / count as f64;
            Camera::new(
                Vec3::new(radius * a.sin(), 0.0, radius * a.cos()),
                Vec3::zeros(),
                Vec3::y(),
                fov_deg.to_radians(),
                (res, res),
            )
            .unwrap()
        })
        .collect();
    CameraRig::new(cams).unwrap()
}

/// Camera on +Z whose frame is exactly filled by the unit quad.
pub fn filling_camera(res: usize) -> Camera {
    let d = 2.0;
    Camera::new(
        Vec3::new(0.0, 0.0, d),
        Vec3::zeros(),
        Vec3::y(),
        2.0 * (0.5f64 / d).atan(),
        (res, res),
    )
    .unwrap()
}

pub fn rms(a: &[f64]) -> f64 {
    (a.iter().map(|x| x * x).sum::<f64>() / a.len().max(1) as f64).sqrt()
}

/// RMS of `a - b` over texels where `mask(texel)` holds, all channels.
pub fn masked_rms(a: &Grid, b: &Grid, mask: impl Fn(usize) -> bool) -> f64 {
    let n = a.height() * a.width();
    let mut d = Vec::new();
    for c in 0..a.channels() {
        for i in 0..n {
            if mask(i) {
                d.push(a.data()[c * n + i] as f64 - b.data()[c * n + i] as f64);
            }
        }
    }
    rms(&d)
}

/// Two parallel unit quads facing +Z: `back` at z = 0 with the left half of
/// the atlas, `front` at z = `gap` with the right half, shifted by `offset`
/// in x in each frame.
pub fn two_planes(gap: f64, offsets: &[f64], front_size: f64) -> MeshSequence {
    let positions = offsets
        .iter()
        .map(|&dx| {
            let h = front_size / 2.0;
            vec![
                Vec3::new(-0.5, -0.5, 0.0),
                Vec3::new(0.5, -0.5, 0.0),
                Vec3::new(0.5, 0.5, 0.0),
                Vec3::new(-0.5, 0.5, 0.0),
                Vec3::new(dx - h, -h, gap),
                Vec3::new(dx + h, -h, gap),
                Vec3::new(dx + h, h, gap),
                Vec3::new(dx - h, h, gap),
            ]
        })
        .collect();
    let g = 1.0 / 64.0;
    let back = [
        Vec2::new(g, g),
        Vec2::new(0.5 - g, g),
        Vec2::new(0.5 - g, 1.0 - g),
        Vec2::new(g, 1.0 - g),
    ];
    let front = back.map(|p| Vec2::new(p.x + 0.5, p.y));
    let faces = vec![[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]];
    let uvs = vec![
        [back[0], back[1], back[2]],
        [back[0], back[2], back[3]],
        [front[0], front[1], front[2]],
        [front[0], front[2], front[3]],
    ];
    MeshSequence::new(positions, faces, uvs).unwrap()
}
