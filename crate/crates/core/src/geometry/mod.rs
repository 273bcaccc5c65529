//! Rigid transforms, the pinhole camera, depth/point-cloud conversion,
//! normals from depth, and an analytic ray caster for ground-truth rendering.
//!
//! Camera frame: +x right, +y down, +z forward. Depth is z-depth, not ray
//! length, and pixel `(u, v)` has its center at integer coordinates.

mod camera;
mod grid;
mod normals;
mod render;
mod resize;
mod transform;

use thiserror::Error;

pub use camera::{deproject, deproject_colored, project, read_ply, write_ply, CameraIntrinsics, PointCloud};
pub use grid::{DepthMap, Grid, IdMap, Mask, NormalMap, RgbImage};
pub use normals::{axis_stencil, normal_from_gradients, normals_from_depth, NormalField};
pub use render::{
    intersect, render_depth, render_scene, Hit, PixelHits, Primitive, SceneRender, Shape, BACKGROUND_ID,
};
pub use resize::{resize_bilinear, resize_nearest};
pub use transform::{object_pose_in_camera, propagate_pose, RigidTransform};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid primitive: {0}")]
    InvalidPrimitive(String),
    #[error("PLY: {0}")]
    Ply(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;
