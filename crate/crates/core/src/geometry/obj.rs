//! Wavefront OBJ reading and writing, one file per keyframe.
//!
//! Only `v`, `vt` and `f` records are interpreted. Face corners must carry a
//! texture index (`v/vt` or `v/vt/vn`); polygons are fan-triangulated and
//! normals in the file are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{MeshSequence, Vec2, Vec3};
use crate::error::{Error, Result, ResultExt};

/// A single parsed OBJ file.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjMesh {
    pub positions: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub uvs: Vec<[Vec2; 3]>,
}

pub fn parse_obj(text: &str, path: &Path) -> Result<ObjMesh> {
    let mut positions = Vec::new();
    let mut texcoords: Vec<Vec2> = Vec::new();
    let mut faces = Vec::new();
    let mut uvs = Vec::new();

    let err =
        |line: usize, msg: &str| Error::Parse(format!("{}:{}: {msg}", path.display(), line + 1));

    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let xyz: Vec<f64> = it
                    .take(3)
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| err(ln, "bad vertex"))?;
                if xyz.len() != 3 {
                    return Err(err(ln, "vertex needs 3 coordinates"));
                }
                positions.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("vt") => {
                let uv: Vec<f64> = it
                    .take(2)
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| err(ln, "bad texture coordinate"))?;
                if uv.len() != 2 {
                    return Err(err(ln, "texture coordinate needs 2 values"));
                }
                texcoords.push(Vec2::new(uv[0], uv[1]));
            }
            Some("f") => {
                let mut corners = Vec::with_capacity(4);
                for tok in it {
                    let mut parts = tok.split('/');
                    let vi = parts.next().unwrap_or("");
                    let ti = parts.next().unwrap_or("");
                    let v = resolve_index(vi, positions.len())
                        .ok_or_else(|| err(ln, "bad vertex index"))?;
                    if ti.is_empty() {
                        return Err(Error::UvMissing {
                            path: path.to_path_buf(),
                        });
                    }
                    let t = resolve_index(ti, texcoords.len())
                        .ok_or_else(|| err(ln, "bad texture index"))?;
                    corners.push((v, t));
                }
                if corners.len() < 3 {
                    return Err(err(ln, "face needs at least 3 corners"));
                }
                for i in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[i], corners[i + 1]];
                    faces.push(tri.map(|(v, _)| v as u32));
                    uvs.push(tri.map(|(_, t)| texcoords[t]));
                }
            }
            _ => {}
        }
    }
    if !faces.is_empty() && texcoords.is_empty() {
        return Err(Error::UvMissing {
            path: path.to_path_buf(),
        });
    }
    Ok(ObjMesh {
        positions,
        faces,
        uvs,
    })
}

/// 1-based (or negative, relative) OBJ index to 0-based.
fn resolve_index(tok: &str, len: usize) -> Option<usize> {
    let i: i64 = tok.parse().ok()?;
    let idx = if i > 0 { i - 1 } else { len as i64 + i };
    (0..len as i64).contains(&idx).then_some(idx as usize)
}

/// Serializes frame `k`. Every face corner gets its own `vt` record so
/// per-corner UVs survive a round trip exactly.
pub fn write_obj(seq: &MeshSequence, k: usize) -> String {
    let mut s = String::new();
    for p in seq.positions(k) {
        let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
    }
    for tri in seq.uvs() {
        for uv in tri {
            let _ = writeln!(s, "vt {} {}", uv.x, uv.y);
        }
    }
    for (f, face) in seq.faces().iter().enumerate() {
        let t = 3 * f + 1;
        let _ = writeln!(
            s,
            "f {}/{} {}/{} {}/{}",
            face[0] + 1,
            t,
            face[1] + 1,
            t + 1,
            face[2] + 1,
            t + 2
        );
    }
    s
}

/// `printf`-style frame file name pattern with one integer field, e.g. `frame_%04d.obj`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePattern {
    prefix: String,
    suffix: String,
    width: usize,
}

impl Default for FramePattern {
    fn default() -> Self {
        Self::parse("frame_%04d.obj").unwrap()
    }
}

impl FramePattern {
    pub fn parse(pattern: &str) -> Result<Self> {
        let start = pattern
            .find('%')
            .ok_or_else(|| Error::invalid(format!("pattern {pattern:?} has no % field")))?;
        let rest = &pattern[start + 1..];
        let end = rest
            .find('d')
            .ok_or_else(|| Error::invalid(format!("pattern {pattern:?} needs a %d field")))?;
        let spec = &rest[..end];
        let width = if spec.is_empty() {
            0
        } else if spec.bytes().all(|b| b.is_ascii_digit()) {
            spec.parse().unwrap_or(0)
        } else {
            return Err(Error::invalid(format!("unsupported field %{spec}d")));
        };
        let suffix = &rest[end + 1..];
        if suffix.contains('%') {
            return Err(Error::invalid("pattern may contain only one % field"));
        }
        Ok(Self {
            prefix: pattern[..start].to_string(),
            suffix: suffix.to_string(),
            width,
        })
    }

    pub fn format(&self, index: usize) -> String {
        format!(
            "{}{:0w$}{}",
            self.prefix,
            index,
            self.suffix,
            w = self.width
        )
    }

    /// Frame number encoded in `name`, if it matches.
    pub fn match_name(&self, name: &str) -> Option<usize> {
        let mid = name
            .strip_prefix(&self.prefix)?
            .strip_suffix(&self.suffix)?;
        if mid.is_empty() || !mid.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        mid.parse().ok()
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub pattern: FramePattern,
    /// Center the union bounding box of all frames at the origin.
    pub center: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            pattern: FramePattern::default(),
            center: true,
        }
    }
}

/// Loads every file in `dir` matching the default pattern, in frame order,
/// and centers the result.
pub fn load_mesh_sequence(dir: impl AsRef<Path>) -> Result<MeshSequence> {
    load_mesh_sequence_with(dir, &LoadOptions::default())
}

pub fn load_mesh_sequence_with(dir: impl AsRef<Path>, opts: &LoadOptions) -> Result<MeshSequence> {
    let dir = dir.as_ref();
    let mut files: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        if let Some(n) = name.to_str().and_then(|s| opts.pattern.match_name(s)) {
            files.push((n, entry.path()));
        }
    }
    if files.is_empty() {
        return Err(Error::invalid(format!(
            "no files matching {} in {}",
            opts.pattern.format(0),
            dir.display()
        )));
    }
    files.sort();

    let mut frames = Vec::with_capacity(files.len());
    let mut first: Option<ObjMesh> = None;
    for (k, (_, path)) in files.iter().enumerate() {
        let text = fs::read_to_string(path).context(|| path.display().to_string())?;
        let mesh = parse_obj(&text, path)?;
        if let Some(f0) = &first {
            if mesh.positions.len() != f0.positions.len() {
                return Err(Error::TopologyMismatch {
                    frame: k,
                    detail: format!(
                        "{} vertices, frame 0 has {}",
                        mesh.positions.len(),
                        f0.positions.len()
                    ),
                });
            }
            if mesh.faces != f0.faces {
                return Err(Error::TopologyMismatch {
                    frame: k,
                    detail: format!(
                        "face list differs ({} faces, frame 0 has {})",
                        mesh.faces.len(),
                        f0.faces.len()
                    ),
                });
            }
            if mesh.uvs != f0.uvs {
                return Err(Error::TopologyMismatch {
                    frame: k,
                    detail: "UV coordinates differ from frame 0".into(),
                });
            }
            frames.push(mesh.positions);
        } else {
            frames.push(mesh.positions.clone());
            first = Some(mesh);
        }
    }
    let first = first.expect("at least one frame");
    let seq = MeshSequence::new(frames, first.faces, first.uvs)?;
    Ok(if opts.center { seq.centered() } else { seq })
}

/// Writes one OBJ per frame into `dir` (created if needed).
pub fn save_mesh_sequence(
    seq: &MeshSequence,
    dir: impl AsRef<Path>,
    pattern: &FramePattern,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for k in 0..seq.frame_count() {
        fs::write(dir.join(pattern.format(k)), write_obj(seq, k))?;
    }
    Ok(())
}
