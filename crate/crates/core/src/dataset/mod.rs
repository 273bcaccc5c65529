//! On-disk samples, quality screening, object-held-out splits and
//! training-time augmentation.

mod augment;
mod io;
mod split;
mod verify;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, DepthMap, GeometryError, Mask, NormalMap, RgbImage, RigidTransform, Shape};

pub use augment::{augment, hls_to_rgb, rgb_to_hls, shift_hls, AugmentConfig};
pub use io::{
    decode_depth_png, encode_depth_png, list_samples, load_sample, read_depth_png, read_rgb_png, read_split,
    save_sample, write_depth_png, write_gray_png, write_rgb_png, write_split, DEPTH_SCALE, MAX_DEPTH,
};
pub use split::{split_dataset, SplitSpec};
pub use verify::{verify_sample, ImageStats, Verdict, VerifyConfig};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },
    #[error("depth {value} m at pixel ({u}, {v}) is not representable (must be finite, within 0..={max} m)")]
    DepthRange { value: f32, u: usize, v: usize, max: f64 },
    #[error("invalid sample: {0}")]
    Invalid(String),
    #[error("split: {0}")]
    Split(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Material {
    Transparent,
    Opaque,
}

/// One object as seen from a particular viewpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectMeta {
    pub id: u32,
    pub shape: Shape,
    pub material: Material,
    /// Camera-from-object pose at this viewpoint.
    pub pose: RigidTransform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleMeta {
    pub scene_id: u32,
    pub viewpoint: u32,
    pub objects: Vec<ObjectMeta>,
    pub intrinsics: CameraIntrinsics,
}

impl SampleMeta {
    pub fn transparent_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.objects.iter().filter(|o| o.material == Material::Transparent).map(|o| o.id)
    }
}

/// One viewpoint of RGB-D data with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub rgb: RgbImage,
    /// Sensor-style depth with holes and outliers; `0` = missing.
    pub raw_depth: DepthMap,
    pub gt_depth: DepthMap,
    pub mask: Mask,
    /// Unit normals where `gt_depth > 0`, zero elsewhere.
    pub normals: NormalMap,
    pub meta: SampleMeta,
}

impl Sample {
    pub fn dims(&self) -> (usize, usize) {
        self.rgb.dims()
    }

    /// Checks that all planes agree in size and the mask only covers known depth.
    pub fn validate(&self) -> Result<()> {
        self.rgb.ensure_dims(&self.raw_depth)?;
        self.rgb.ensure_dims(&self.gt_depth)?;
        self.rgb.ensure_dims(&self.mask)?;
        self.rgb.ensure_dims(&self.normals)?;
        let (w, _) = self.dims();
        for (i, (&m, &d)) in self.mask.data().iter().zip(self.gt_depth.data()).enumerate() {
            if m && !(d > 0.0) {
                return Err(DatasetError::Invalid(format!(
                    "mask set at ({}, {}) where ground-truth depth is {d}",
                    i % w,
                    i / w
                )));
            }
        }
        Ok(())
    }
}
