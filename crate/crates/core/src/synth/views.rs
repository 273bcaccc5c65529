use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, Result, SceneSpec, SynthConfig, SynthError, TABLE_ID};
use crate::dataset::{Material, ObjectMeta};
use crate::geometry::{
    project, propagate_pose, render_scene, CameraIntrinsics, DepthMap, Hit, Mask, NormalMap, Primitive, RgbImage,
    RigidTransform, SceneRender,
};

/// Perturbation of the camera poses used for pose bookkeeping, standing in for
/// tracker/marker calibration error. Sensor images always use the true poses,
/// so nonzero noise misaligns the ground truth by a controlled amount.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseNoise {
    pub rotation_deg: f64,
    pub translation_m: f64,
}

impl PoseNoise {
    fn is_zero(&self) -> bool {
        self.rotation_deg == 0.0 && self.translation_m == 0.0
    }

    fn perturb(&self, pose: &RigidTransform, rng: &mut ChaCha8Rng) -> RigidTransform {
        if self.is_zero() {
            return *pose;
        }
        let n = Normal::new(0.0, 1.0).expect("unit normal");
        let axis: [f64; 3] = std::array::from_fn(|_| n.sample(rng));
        let angle = self.rotation_deg.to_radians() * n.sample(rng);
        let t: [f64; 3] = std::array::from_fn(|_| self.translation_m * n.sample(rng));
        RigidTransform::from_axis_angle(axis, angle, t).compose(pose)
    }
}

/// Camera-from-world poses on a ring around the table center, all aimed at
/// the scene center.
pub fn trajectory(config: &SynthConfig) -> Result<Vec<RigidTransform>> {
    let intr = config.intrinsics();
    let target = [0.0, 0.0, config.table_height + config.look_at_height];
    (0..config.views)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / config.views as f64;
            let eye = [
                config.trajectory_radius * theta.cos(),
                config.trajectory_radius * theta.sin(),
                config.table_height + config.trajectory_height,
            ];
            let pose = RigidTransform::look_at(eye, target, [0.0, 0.0, 1.0])?;
            match project(&intr, pose.apply_point(target)) {
                Some((u, v)) if u >= 0.0 && v >= 0.0 && u < intr.width as f64 && v < intr.height as f64 => Ok(pose),
                _ => Err(SynthError::Config(format!("view {k} does not see the scene center"))),
            }
        })
        .collect()
}

/// Ground truth and sensor color for one viewpoint.
#[derive(Clone, Debug)]
pub struct ViewRender {
    pub gt_depth: DepthMap,
    pub mask: Mask,
    pub normals: NormalMap,
    pub rgb: RgbImage,
    /// Depth of the first non-transparent surface, `0` where there is none.
    pub behind_depth: DepthMap,
    /// Object poses in this camera, obtained by propagation from view 0.
    pub objects: Vec<ObjectMeta>,
}

const LIGHT_WORLD: [f64; 3] = [0.3, 0.2, 1.0];

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

struct Shader<'a> {
    scene: &'a SceneSpec,
    world_from_cam: RigidTransform,
    light: [f64; 3],
    table_colors: [[f64; 3]; 2],
    height: usize,
}

impl Shader<'_> {
    fn surface(&self, hit: &Hit, ray: [f64; 3]) -> [f64; 3] {
        let albedo = if hit.id == TABLE_ID {
            let p = self.world_from_cam.apply_point([ray[0] * hit.t, ray[1] * hit.t, hit.t]);
            let cell = (p[0] / 0.05).floor() as i64 + (p[1] / 0.05).floor() as i64;
            self.table_colors[cell.rem_euclid(2) as usize]
        } else {
            self.scene.albedo(hit.id).unwrap_or([0.5; 3])
        };
        let diffuse = dot(hit.normal, self.light).max(0.0);
        albedo.map(|a| a * (0.3 + 0.7 * diffuse))
    }

    fn background(&self, v: usize) -> [f64; 3] {
        let s = 0.6 + 0.4 * v as f64 / self.height as f64;
        [0.5 * s, 0.55 * s, 0.65 * s]
    }

    fn is_transparent(&self, id: u32) -> bool {
        self.scene.material(id) == Some(Material::Transparent)
    }

    fn shade(&self, render: &SceneRender, intr: &CameraIntrinsics, u: usize, v: usize) -> [u8; 3] {
        let ray = intr.pixel_ray(u as f64, v as f64);
        let hits = render.pixel(u, v);
        let behind = match hits.first_where(|id| !self.is_transparent(id)) {
            Some(h) => self.surface(h, ray),
            None => self.background(v),
        };
        let color = match hits.first() {
            Some(h) if self.is_transparent(h.id) => {
                // see-through with a view-dependent rim highlight
                let tint = self.scene.albedo(h.id).unwrap_or([1.0; 3]);
                let facing = dot(h.normal, normalize(ray)).abs();
                let rim = (1.0 - facing).powi(3);
                std::array::from_fn(|c| behind[c] * tint[c] * (1.0 - rim) + 0.95 * rim)
            }
            _ => behind,
        };
        color.map(|c| (c * 255.0).round().clamp(0.0, 255.0) as u8)
    }
}

/// Renders every viewpoint. Object poses for view `k` are carried over from
/// view 0 through `propagate_pose`, using the (optionally perturbed) camera
/// poses; the color image and corruption source use the true poses.
pub fn render_viewpoints(
    scene: &SceneSpec,
    cam_from_world: &[RigidTransform],
    intr: &CameraIntrinsics,
    noise: &PoseNoise,
    seed: u64,
) -> Result<Vec<ViewRender>> {
    let Some(cam0) = cam_from_world.first() else { return Ok(Vec::new()) };
    let estimated: Vec<RigidTransform> = cam_from_world
        .iter()
        .enumerate()
        .map(|(k, pose)| noise.perturb(pose, &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, k as u64))))
        .collect();
    let world_prims = scene.primitives();
    // poses observed in the reference view
    let observed0: Vec<RigidTransform> = world_prims.iter().map(|p| cam0.compose(&p.pose)).collect();

    let mut tex = ChaCha8Rng::seed_from_u64(scene.texture_seed);
    let base: [f64; 3] = [tex.random_range(0.45..0.75), tex.random_range(0.3..0.55), tex.random_range(0.15..0.35)];
    let table_colors = [base, base.map(|c| c * 0.7)];

    cam_from_world
        .par_iter()
        .enumerate()
        .map(|(k, cam)| {
            let gt_prims: Vec<Primitive> = world_prims
                .iter()
                .zip(&observed0)
                .map(|(p, obs)| Primitive { pose: propagate_pose(&estimated[k], &estimated[0], obs), ..*p })
                .collect();
            let identity = RigidTransform::identity();
            let gt = render_scene(&gt_prims, &identity, intr)?;
            let sensor = if noise.is_zero() { gt.clone() } else { render_scene(&world_prims, cam, intr)? };

            let shader = Shader {
                scene,
                world_from_cam: cam.invert(),
                light: normalize(cam.apply_vector(normalize(LIGHT_WORLD))),
                table_colors,
                height: intr.height,
            };
            let rgb = RgbImage::from_fn(intr.width, intr.height, |u, v| shader.shade(&sensor, intr, u, v));
            let ids = gt.ids();
            let mask = ids.map(|&id| shader.is_transparent(id));
            let objects = gt_prims
                .iter()
                .filter(|p| p.id != TABLE_ID)
                .map(|p| ObjectMeta {
                    id: p.id,
                    shape: p.shape,
                    material: scene.material(p.id).expect("object from scene"),
                    pose: p.pose,
                })
                .collect();
            Ok(ViewRender {
                gt_depth: gt.depth(),
                mask,
                normals: gt.normals(),
                rgb,
                behind_depth: sensor.depth_where(|id| !shader.is_transparent(id)),
                objects,
            })
        })
        .collect()
}
