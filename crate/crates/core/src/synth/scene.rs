use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Result, SynthConfig, SynthError};
use crate::dataset::Material;
use crate::geometry::{Primitive, RigidTransform, Shape};

/// Primitive id of the table top.
pub const TABLE_ID: u32 = u32::MAX;

/// Table-top slab thickness in meters.
const TABLE_THICKNESS: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: u32,
    pub shape: Shape,
    pub material: Material,
    /// Diffuse color for opaque objects, tint for transparent ones.
    pub albedo: [f64; 3],
}

/// The shared object set: transparent objects get ids `1..=n_transparent`,
/// opaque objects follow.
pub fn catalog(seed: u64, n_transparent: usize, n_opaque: usize) -> Vec<CatalogEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_transparent + n_opaque)
        .map(|i| {
            let shape = match i % 3 {
                0 => Shape::Cylinder { radius: rng.random_range(0.02..0.04), half_height: rng.random_range(0.03..0.07) },
                1 => Shape::Sphere { radius: rng.random_range(0.025..0.045) },
                _ => Shape::Cuboid {
                    half_extents: [
                        rng.random_range(0.015..0.04),
                        rng.random_range(0.015..0.04),
                        rng.random_range(0.02..0.05),
                    ],
                },
            };
            let (material, albedo) = if i < n_transparent {
                (Material::Transparent, std::array::from_fn(|_| rng.random_range(0.8..1.0)))
            } else {
                (Material::Opaque, std::array::from_fn(|_| rng.random_range(0.15..0.9)))
            };
            CatalogEntry { id: i as u32 + 1, shape, material, albedo }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub entry: CatalogEntry,
    /// World-from-object pose.
    pub pose: RigidTransform,
}

impl PlacedObject {
    pub fn primitive(&self) -> Primitive {
        Primitive { id: self.entry.id, shape: self.entry.shape, pose: self.pose }
    }
}

/// A table top with objects resting on it; world z points up and the table
/// surface is the plane `z = table_height`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub objects: Vec<PlacedObject>,
    pub table: Primitive,
    pub table_height: f64,
    pub texture_seed: u64,
}

impl SceneSpec {
    pub fn primitives(&self) -> Vec<Primitive> {
        let mut out: Vec<Primitive> = self.objects.iter().map(PlacedObject::primitive).collect();
        out.push(self.table);
        out
    }

    pub fn material(&self, id: u32) -> Option<Material> {
        self.objects.iter().find(|o| o.entry.id == id).map(|o| o.entry.material)
    }

    pub fn albedo(&self, id: u32) -> Option<[f64; 3]> {
        self.objects.iter().find(|o| o.entry.id == id).map(|o| o.entry.albedo)
    }
}

/// Seeded placement: objects stand upright at random positions and yaw,
/// rejected while their bounding spheres overlap an earlier object.
pub fn generate_scene(seed: u64, config: &SynthConfig) -> Result<SceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all = catalog(config.catalog_seed, config.catalog_transparent, config.catalog_opaque);
    let (t_range, o_range) = config.counts();
    let n_t = rng.random_range(t_range[0]..=t_range[1]);
    let n_o = rng.random_range(o_range[0]..=o_range[1]);
    let (transparent, opaque) = all.split_at(config.catalog_transparent);
    let mut chosen: Vec<CatalogEntry> = Vec::with_capacity(n_t + n_o);
    for (pool, n) in [(transparent, n_t), (opaque, n_o)] {
        let mut idx = rand::seq::index::sample(&mut rng, pool.len(), n).into_vec();
        idx.sort_unstable();
        chosen.extend(idx.into_iter().map(|i| pool[i]));
    }

    let mut objects: Vec<PlacedObject> = Vec::with_capacity(chosen.len());
    for entry in chosen {
        let r = entry.shape.bounding_radius();
        let mut attempts = 0;
        let pose = loop {
            if attempts == config.max_attempts {
                return Err(SynthError::Placement { id: entry.id, attempts });
            }
            attempts += 1;
            let rho = config.placement_radius * rng.random::<f64>().sqrt();
            let phi = rng.random_range(0.0..2.0 * PI);
            let yaw = rng.random_range(0.0..2.0 * PI);
            let center = [rho * phi.cos(), rho * phi.sin(), config.table_height + entry.shape.half_height()];
            let clear = objects.iter().all(|o| {
                let c = o.pose.translation();
                let d = ((c[0] - center[0]).powi(2) + (c[1] - center[1]).powi(2) + (c[2] - center[2]).powi(2)).sqrt();
                d >= r + o.entry.shape.bounding_radius() + config.clearance
            });
            if clear {
                break RigidTransform::from_axis_angle([0.0, 0.0, 1.0], yaw, center);
            }
        };
        objects.push(PlacedObject { entry, pose });
    }

    let [hx, hy] = config.table_half_extents;
    let table = Primitive {
        id: TABLE_ID,
        shape: Shape::Cuboid { half_extents: [hx, hy, TABLE_THICKNESS / 2.0] },
        pose: RigidTransform::from_translation([0.0, 0.0, config.table_height - TABLE_THICKNESS / 2.0]),
    };
    Ok(SceneSpec { objects, table, table_height: config.table_height, texture_seed: rng.random() })
}
