use super::{Vec2, Vec3};
use crate::error::{Error, Result};

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }
    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x
    }
    pub fn include(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }
    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }
    pub fn diagonal(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            (self.max - self.min).norm()
        }
    }
}

/// K animated frames sharing one triangle list and one UV atlas.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshSequence {
    positions: Vec<Vec<Vec3>>,
    normals: Vec<Vec<Vec3>>,
    faces: Vec<[u32; 3]>,
    uvs: Vec<[Vec2; 3]>,
}

/// Borrowed view of one frame of a [`MeshSequence`].
#[derive(Debug, Clone, Copy)]
pub struct MeshFrame<'a> {
    pub positions: &'a [Vec3],
    pub normals: &'a [Vec3],
    pub faces: &'a [[u32; 3]],
    pub uvs: &'a [[Vec2; 3]],
}

impl MeshFrame<'_> {
    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [
            self.positions[a as usize],
            self.positions[b as usize],
            self.positions[c as usize],
        ]
    }

    pub fn triangle_normals(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [
            self.normals[a as usize],
            self.normals[b as usize],
            self.normals[c as usize],
        ]
    }

    pub fn aabb(&self) -> Aabb {
        let mut b = Aabb::empty();
        for f in self.faces {
            for &i in f {
                b.include(&self.positions[i as usize]);
            }
        }
        b
    }
}

impl MeshSequence {
    /// Validates and builds a sequence. `uvs` holds one entry per face corner.
    pub fn new(
        positions: Vec<Vec<Vec3>>,
        faces: Vec<[u32; 3]>,
        uvs: Vec<[Vec2; 3]>,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidMesh("sequence has no frames".into()));
        }
        let nv = positions[0].len();
        for (k, frame) in positions.iter().enumerate() {
            if frame.len() != nv {
                return Err(Error::TopologyMismatch {
                    frame: k,
                    detail: format!("{} vertices, frame 0 has {nv}", frame.len()),
                });
            }
            if frame.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
                return Err(Error::InvalidMesh(format!(
                    "frame {k} has non-finite positions"
                )));
            }
        }
        if uvs.len() != faces.len() {
            return Err(Error::InvalidMesh(format!(
                "{} faces but {} UV triples",
                faces.len(),
                uvs.len()
            )));
        }
        for (f, face) in faces.iter().enumerate() {
            if let Some(&i) = face.iter().find(|&&i| i as usize >= nv) {
                return Err(Error::InvalidMesh(format!(
                    "face {f} references vertex {i}, only {nv} exist"
                )));
            }
        }
        for (f, tri) in uvs.iter().enumerate() {
            for uv in tri {
                if !(0.0..=1.0).contains(&uv.x) || !(0.0..=1.0).contains(&uv.y) {
                    return Err(Error::InvalidMesh(format!(
                        "face {f} has UV ({}, {}) outside [0,1]^2",
                        uv.x, uv.y
                    )));
                }
            }
        }
        let normals = positions
            .iter()
            .map(|p| vertex_normals(p, &faces))
            .collect();
        Ok(Self {
            positions,
            normals,
            faces,
            uvs,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.positions.len()
    }
    pub fn vertex_count(&self) -> usize {
        self.positions[0].len()
    }
    pub fn face_count(&self) -> usize {
        self.faces.len()
    }
    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }
    pub fn uvs(&self) -> &[[Vec2; 3]] {
        &self.uvs
    }
    pub fn positions(&self, k: usize) -> &[Vec3] {
        &self.positions[k]
    }

    pub fn frame(&self, k: usize) -> MeshFrame<'_> {
        MeshFrame {
            positions: &self.positions[k],
            normals: &self.normals[k],
            faces: &self.faces,
            uvs: &self.uvs,
        }
    }

    /// Union bounding box over all frames.
    pub fn aabb(&self) -> Aabb {
        let mut b = Aabb::empty();
        for k in 0..self.frame_count() {
            let fb = self.frame(k).aabb();
            if !fb.is_empty() {
                b.include(&fb.min);
                b.include(&fb.max);
            }
        }
        b
    }

    /// Translates every frame so the union bounding box is centered at the origin.
    pub fn centered(mut self) -> Self {
        let b = self.aabb();
        if b.is_empty() {
            return self;
        }
        let c = b.center();
        for frame in &mut self.positions {
            for p in frame.iter_mut() {
                *p -= c;
            }
        }
        self
    }

    /// Subsequence containing only frame `k`.
    pub fn single_frame(&self, k: usize) -> MeshSequence {
        Self {
            positions: vec![self.positions[k].clone()],
            normals: vec![self.normals[k].clone()],
            faces: self.faces.clone(),
            uvs: self.uvs.clone(),
        }
    }

    /// Inserts `interval - 1` linearly interpolated frames between consecutive
    /// keyframes; keyframes are kept bit-exact.
    pub fn with_inbetweens(&self, interval: usize) -> Result<MeshSequence> {
        if interval == 0 {
            return Err(Error::invalid("interval must be >= 1"));
        }
        let k = self.frame_count();
        let mut positions = Vec::with_capacity((k - 1) * interval + 1);
        for i in 0..k {
            positions.push(self.positions[i].clone());
            if i + 1 == k {
                break;
            }
            for j in 1..interval {
                let s = j as f64 / interval as f64;
                positions.push(
                    self.positions[i]
                        .iter()
                        .zip(&self.positions[i + 1])
                        .map(|(a, b)| a * (1.0 - s) + b * s)
                        .collect(),
                );
            }
        }
        MeshSequence::new(positions, self.faces.clone(), self.uvs.clone())
    }
}

/// Area-weighted vertex normals.
fn vertex_normals(positions: &[Vec3], faces: &[[u32; 3]]) -> Vec<Vec3> {
    let mut acc = vec![Vec3::zeros(); positions.len()];
    for &[a, b, c] in faces {
        let (pa, pb, pc) = (
            positions[a as usize],
            positions[b as usize],
            positions[c as usize],
        );
        // Unnormalized cross product has length 2 * area.
        let n = (pb - pa).cross(&(pc - pa));
        acc[a as usize] += n;
        acc[b as usize] += n;
        acc[c as usize] += n;
    }
    for n in &mut acc {
        let len = n.norm();
        if len > 0.0 {
            *n /= len;
        }
    }
    acc
}
