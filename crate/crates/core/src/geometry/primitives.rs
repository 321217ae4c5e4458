//! Procedural meshes with UV atlases, used by tests, benches and the CLI.

use std::f64::consts::PI;

use super::{MeshSequence, Vec2, Vec3};

/// Swaps corners so the face normal points away from `center` (convex shapes only).
fn orient_outward(tri: &mut [u32; 3], uv: &mut [Vec2; 3], pos: &[Vec3], center: Vec3) {
    let [a, b, c] = tri.map(|i| pos[i as usize]);
    let n = (b - a).cross(&(c - a));
    if n.dot(&((a + b + c) / 3.0 - center)) < 0.0 {
        tri.swap(1, 2);
        uv.swap(1, 2);
    }
}

/// `width x height` rectangle in the XY plane centered at the origin, facing +Z,
/// with UV `(0,0)` at the bottom-left corner and `(1,1)` at the top-right.
pub fn quad(width: f64, height: f64) -> MeshSequence {
    let (hw, hh) = (0.5 * width, 0.5 * height);
    let pos = vec![
        Vec3::new(-hw, -hh, 0.0),
        Vec3::new(hw, -hh, 0.0),
        Vec3::new(hw, hh, 0.0),
        Vec3::new(-hw, hh, 0.0),
    ];
    let uv = [
        Vec2::new(0.0, 0.0),
        Vec2::new(1.0, 0.0),
        Vec2::new(1.0, 1.0),
        Vec2::new(0.0, 1.0),
    ];
    MeshSequence::new(
        vec![pos],
        vec![[0, 1, 2], [0, 2, 3]],
        vec![[uv[0], uv[1], uv[2]], [uv[0], uv[2], uv[3]]],
    )
    .expect("quad is valid")
}

/// Latitude/longitude sphere. `u` follows longitude (from +Z toward +X),
/// `v` runs from 0 at the south pole to 1 at the north pole.
pub fn uv_sphere(radius: f64, segments: usize, rings: usize) -> MeshSequence {
    assert!(segments >= 3 && rings >= 2);
    let point = |r: usize, s: usize| {
        let theta = PI * r as f64 / rings as f64;
        let phi = 2.0 * PI * s as f64 / segments as f64;
        Vec3::new(
            theta.sin() * phi.sin(),
            theta.cos(),
            theta.sin() * phi.cos(),
        ) * radius
    };
    // Vertex 0 is the north pole, 1 the south pole, then rings 1..rings-1.
    let mut pos = vec![Vec3::new(0.0, radius, 0.0), Vec3::new(0.0, -radius, 0.0)];
    for r in 1..rings {
        for s in 0..segments {
            pos.push(point(r, s));
        }
    }
    let vid = |r: usize, s: usize| -> u32 {
        if r == 0 {
            0
        } else if r == rings {
            1
        } else {
            (2 + (r - 1) * segments + s % segments) as u32
        }
    };
    let uv = |r: usize, s: f64| Vec2::new(s / segments as f64, 1.0 - r as f64 / rings as f64);

    let mut faces = Vec::new();
    let mut uvs = Vec::new();
    for r in 0..rings {
        for s in 0..segments {
            let sf = s as f64;
            if r == 0 {
                faces.push([vid(0, s), vid(1, s), vid(1, s + 1)]);
                uvs.push([uv(0, sf + 0.5), uv(1, sf), uv(1, sf + 1.0)]);
            } else if r == rings - 1 {
                faces.push([vid(r, s), vid(rings, s), vid(r, s + 1)]);
                uvs.push([uv(r, sf), uv(rings, sf + 0.5), uv(r, sf + 1.0)]);
            } else {
                faces.push([vid(r, s), vid(r + 1, s), vid(r + 1, s + 1)]);
                uvs.push([uv(r, sf), uv(r + 1, sf), uv(r + 1, sf + 1.0)]);
                faces.push([vid(r, s), vid(r + 1, s + 1), vid(r, s + 1)]);
                uvs.push([uv(r, sf), uv(r + 1, sf + 1.0), uv(r, sf + 1.0)]);
            }
        }
    }
    for (f, t) in faces.iter_mut().zip(uvs.iter_mut()) {
        orient_outward(f, t, &pos, Vec3::zeros());
    }
    MeshSequence::new(vec![pos], faces, uvs).expect("sphere is valid")
}

/// Axis-aligned cube with 8 shared vertices and 12 triangles; each side gets
/// its own cell of a 3x2 atlas with a small gutter between cells.
pub fn cube(size: f64) -> MeshSequence {
    let h = 0.5 * size;
    let pos: Vec<Vec3> = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 != 0 { h } else { -h },
                if i & 2 != 0 { h } else { -h },
                if i & 4 != 0 { h } else { -h },
            )
        })
        .collect();
    // Corners of each side in cyclic order.
    let sides: [[u32; 4]; 6] = [
        [1, 3, 7, 5], // +X
        [0, 4, 6, 2], // -X
        [2, 6, 7, 3], // +Y
        [0, 1, 5, 4], // -Y
        [4, 5, 7, 6], // +Z
        [0, 2, 3, 1], // -Z
    ];
    let gutter = 1.0 / 32.0;
    let mut faces = Vec::new();
    let mut uvs = Vec::new();
    for (i, side) in sides.iter().enumerate() {
        let (cx, cy) = ((i % 3) as f64 / 3.0, (i / 3) as f64 / 2.0);
        let (w, hgt) = (1.0 / 3.0 - 2.0 * gutter, 0.5 - 2.0 * gutter);
        let corner = |j: usize| {
            let (a, b) = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)][j];
            Vec2::new(cx + gutter + a * w, cy + gutter + b * hgt)
        };
        for (a, b, c) in [(0, 1, 2), (0, 2, 3)] {
            let mut f = [side[a], side[b], side[c]];
            let mut t = [corner(a), corner(b), corner(c)];
            orient_outward(&mut f, &mut t, &pos, Vec3::zeros());
            faces.push(f);
            uvs.push(t);
        }
    }
    MeshSequence::new(vec![pos], faces, uvs).expect("cube is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_normals_point_outward() {
        let m = uv_sphere(1.0, 24, 12);
        let f = m.frame(0);
        for (p, n) in f.positions.iter().zip(f.normals) {
            assert!(p.normalize().dot(n) > 0.95);
        }
        for &[a, b, c] in m.faces() {
            let [a, b, c] = [a, b, c].map(|i| f.positions[i as usize]);
            assert!((b - a).cross(&(c - a)).dot(&(a + b + c)) > 0.0);
        }
    }

    #[test]
    fn cube_counts() {
        let m = cube(1.0);
        assert_eq!(m.vertex_count(), 8);
        assert_eq!(m.face_count(), 12);
    }
}
