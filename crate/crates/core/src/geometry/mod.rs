//! Mesh sequences with a shared UV atlas, and the camera rig.

mod camera;
mod mesh;
mod obj;
pub mod primitives;

pub use camera::{default_rig, Camera, CameraRig, Projection, RigSpec, TopView};
pub use mesh::{Aabb, MeshFrame, MeshSequence};
pub use obj::{
    load_mesh_sequence, load_mesh_sequence_with, parse_obj, save_mesh_sequence, write_obj,
    FramePattern, LoadOptions, ObjMesh,
};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Vec2 = nalgebra::Vector2<f64>;
