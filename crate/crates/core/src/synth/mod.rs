//! Procedural desk scenes: a fixed object catalog, seeded placement on a
//! table, a ring trajectory of viewpoints, ground-truth rendering and a
//! sensor corruption model for transparent regions.

mod corrupt;
mod scene;
mod views;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{self, save_sample, split_dataset, verify_sample, DatasetError, Sample, SplitSpec, VerifyConfig};
use crate::geometry::GeometryError;

pub use corrupt::{corrupt_depth, dilate, CorruptionModel};
pub use scene::{catalog, generate_scene, CatalogEntry, PlacedObject, SceneSpec, TABLE_ID};
pub use views::{render_viewpoints, trajectory, PoseNoise, ViewRender};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("could not place object {id} after {attempts} attempts; reduce object counts or sizes, or widen placement_radius")]
    Placement { id: u32, attempts: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;

/// Object-count presets for generated scenes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// One to three transparent objects, nothing else.
    Isolated,
    /// At least four transparent and two opaque objects.
    #[default]
    Cluttered,
}

impl Preset {
    pub fn counts(self) -> ([usize; 2], [usize; 2]) {
        match self {
            Preset::Isolated => ([1, 3], [0, 0]),
            Preset::Cluttered => ([4, 6], [2, 3]),
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "isolated" => Ok(Preset::Isolated),
            "cluttered" => Ok(Preset::Cluttered),
            other => Err(format!("unknown preset {other:?}, expected isolated or cluttered")),
        }
    }
}

/// Everything the generator needs besides the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
    /// Seed of the shared object catalog; scenes draw objects from it.
    pub catalog_seed: u64,
    pub catalog_transparent: usize,
    pub catalog_opaque: usize,
    pub preset: Preset,
    /// Inclusive count ranges overriding the preset.
    pub transparent_count: Option<[usize; 2]>,
    pub opaque_count: Option<[usize; 2]>,
    /// Object centers are drawn from a disc of this radius on the table.
    pub placement_radius: f64,
    /// Extra gap between bounding spheres.
    pub clearance: f64,
    pub max_attempts: usize,
    pub table_height: f64,
    pub table_half_extents: [f64; 2],
    pub views: usize,
    pub trajectory_radius: f64,
    /// Camera height above the table.
    pub trajectory_height: f64,
    /// Height above the table of the point every view looks at.
    pub look_at_height: f64,
    pub corruption: CorruptionModel,
    pub extrinsic_noise: PoseNoise,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            hfov_deg: 60.0,
            catalog_seed: 7,
            catalog_transparent: 16,
            catalog_opaque: 8,
            preset: Preset::Cluttered,
            transparent_count: None,
            opaque_count: None,
            placement_radius: 0.2,
            clearance: 0.005,
            max_attempts: 2000,
            table_height: 0.0,
            table_half_extents: [0.6, 0.45],
            views: 24,
            trajectory_radius: 0.45,
            trajectory_height: 0.4,
            look_at_height: 0.04,
            corruption: CorruptionModel::default(),
            extrinsic_noise: PoseNoise::default(),
        }
    }
}

impl SynthConfig {
    pub fn counts(&self) -> ([usize; 2], [usize; 2]) {
        let (t, o) = self.preset.counts();
        (self.transparent_count.unwrap_or(t), self.opaque_count.unwrap_or(o))
    }

    pub fn intrinsics(&self) -> crate::geometry::CameraIntrinsics {
        crate::geometry::CameraIntrinsics::from_fov(self.width, self.height, self.hfov_deg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SynthError::Config(m));
        if self.width < 2 || self.height < 2 {
            return bad(format!("image must be at least 2x2, got {}x{}", self.width, self.height));
        }
        if !(self.hfov_deg > 0.0 && self.hfov_deg < 180.0) {
            return bad(format!("hfov_deg must be in (0, 180), got {}", self.hfov_deg));
        }
        let (t, o) = self.counts();
        for (name, range, avail) in
            [("transparent", t, self.catalog_transparent), ("opaque", o, self.catalog_opaque)]
        {
            if range[0] > range[1] {
                return bad(format!("{name}_count range {range:?} is empty"));
            }
            if range[1] > avail {
                return bad(format!("{name}_count up to {} exceeds the {avail} catalog objects", range[1]));
            }
        }
        if self.views == 0 {
            return bad("views must be positive".into());
        }
        if !(self.placement_radius > 0.0 && self.trajectory_radius > 0.0 && self.trajectory_height > 0.0) {
            return bad("placement_radius, trajectory_radius and trajectory_height must be positive".into());
        }
        if self.table_half_extents.iter().any(|&e| e < self.placement_radius) {
            return bad("table_half_extents must cover placement_radius".into());
        }
        self.corruption.validate()?;
        self.intrinsics().validate()?;
        Ok(())
    }
}

/// Splits `base` into independent streams (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// All viewpoints of one scene as finished samples.
pub fn generate_scene_samples(config: &SynthConfig, seed: u64, scene_id: u32) -> Result<Vec<Sample>> {
    config.validate()?;
    let scene_seed = derive_seed(seed, scene_id as u64);
    let scene = generate_scene(scene_seed, config)?;
    let intr = config.intrinsics();
    let traj = trajectory(config)?;
    let renders = render_viewpoints(&scene, &traj, &intr, &config.extrinsic_noise, derive_seed(scene_seed, 1))?;
    renders
        .into_par_iter()
        .enumerate()
        .map(|(k, view)| {
            let raw_depth = corrupt_depth(
                &view.gt_depth,
                &view.mask,
                &view.behind_depth,
                &config.corruption,
                derive_seed(scene_seed, 1000 + k as u64),
            )?;
            let sample = Sample {
                rgb: view.rgb,
                raw_depth,
                gt_depth: view.gt_depth,
                mask: view.mask,
                normals: view.normals,
                meta: dataset::SampleMeta { scene_id, viewpoint: k as u32, objects: view.objects, intrinsics: intr },
            };
            sample.validate()?;
            Ok(sample)
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GenerateSummary {
    pub scenes: usize,
    pub samples: usize,
    pub rejected: usize,
    pub split: Option<SplitSpec>,
}

/// Generates `scenes` scenes under `out/scene_XXXX/view_XXX`, drops frames that
/// fail the quality screen, and writes `split.json` holding out `holdout`
/// transparent catalog objects.
pub fn generate_dataset(
    out: &Path,
    config: &SynthConfig,
    scenes: usize,
    seed: u64,
    holdout: usize,
    verify: &VerifyConfig,
) -> Result<GenerateSummary> {
    config.validate()?;
    std::fs::create_dir_all(out).map_err(|source| DatasetError::Io { path: out.to_path_buf(), source })?;
    let mut summary = GenerateSummary { scenes, ..Default::default() };
    let mut scene_objects = Vec::with_capacity(scenes);
    for scene_id in 0..scenes as u32 {
        let samples = generate_scene_samples(config, seed, scene_id)?;
        let ids: Vec<u32> = samples.first().map(|s| s.meta.transparent_ids().collect()).unwrap_or_default();
        scene_objects.push((scene_id, ids));
        for sample in samples {
            if !verify_sample(&sample.rgb, verify).0.is_accept() {
                summary.rejected += 1;
                continue;
            }
            let dir = out.join(format!("scene_{scene_id:04}")).join(format!("view_{:03}", sample.meta.viewpoint));
            save_sample(&sample, &dir)?;
            summary.samples += 1;
        }
    }
    let split = split_dataset(&scene_objects, holdout, seed)?;
    dataset::write_split(out, &split)?;
    summary.split = Some(split);
    Ok(summary)
}
