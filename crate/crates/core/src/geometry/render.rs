use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CameraIntrinsics, DepthMap, GeometryError, IdMap, NormalMap, Result, RigidTransform};

/// Id written where a ray escapes the scene.
pub const BACKGROUND_ID: u32 = 0;

const T_EPS: f64 = 1e-9;

/// Analytic shapes in their own object frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Centered at the origin.
    Sphere { radius: f64 },
    /// Axis-aligned box centered at the origin.
    Cuboid { half_extents: [f64; 3] },
    /// Axis along z, centered at the origin, with flat caps.
    Cylinder { radius: f64, half_height: f64 },
    /// The infinite plane `z = 0`.
    Plane,
}

impl Shape {
    /// Radius of a ball around the origin containing the shape.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } => radius,
            Shape::Cuboid { half_extents: h } => (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt(),
            Shape::Cylinder { radius, half_height } => radius.hypot(half_height),
            Shape::Plane => f64::INFINITY,
        }
    }

    /// Distance from the origin to the lowest point along object -z.
    pub fn half_height(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } => radius,
            Shape::Cuboid { half_extents } => half_extents[2],
            Shape::Cylinder { half_height, .. } => half_height,
            Shape::Plane => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let dims: Vec<f64> = match *self {
            Shape::Sphere { radius } => vec![radius],
            Shape::Cuboid { half_extents } => half_extents.to_vec(),
            Shape::Cylinder { radius, half_height } => vec![radius, half_height],
            Shape::Plane => vec![],
        };
        if dims.iter().all(|d| d.is_finite() && *d > 0.0) {
            Ok(())
        } else {
            Err(GeometryError::InvalidPrimitive(format!("non-positive dimension in {self:?}")))
        }
    }

    /// Nearest hit with `t > eps` of `o + t d`, with the outward normal at the hit.
    fn intersect_local(&self, o: [f64; 3], d: [f64; 3]) -> Option<(f64, [f64; 3])> {
        match *self {
            Shape::Sphere { radius } => {
                let a = dot(d, d);
                let b = dot(o, d);
                let c = dot(o, o) - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                let t = [(-b - s) / a, (-b + s) / a].into_iter().find(|&t| t > T_EPS)?;
                Some((t, normalize(at(o, d, t))))
            }
            Shape::Cuboid { half_extents: h } => {
                let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
                let (mut near_axis, mut far_axis) = (0, 0);
                for k in 0..3 {
                    if d[k] == 0.0 {
                        if o[k].abs() > h[k] {
                            return None;
                        }
                        continue;
                    }
                    let (t0, t1) = ((-h[k] - o[k]) / d[k], (h[k] - o[k]) / d[k]);
                    let (t0, t1) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
                    if t0 > t_near {
                        t_near = t0;
                        near_axis = k;
                    }
                    if t1 < t_far {
                        t_far = t1;
                        far_axis = k;
                    }
                }
                if t_near > t_far {
                    return None;
                }
                let (t, k) = if t_near > T_EPS {
                    (t_near, near_axis)
                } else if t_far > T_EPS {
                    (t_far, far_axis)
                } else {
                    return None;
                };
                let mut n = [0.0; 3];
                n[k] = at(o, d, t)[k].signum();
                Some((t, n))
            }
            Shape::Cylinder { radius, half_height } => {
                let mut best: Option<(f64, [f64; 3])> = None;
                let mut keep = |t: f64, n: [f64; 3]| {
                    if t > T_EPS && best.is_none_or(|(bt, _)| t < bt) {
                        best = Some((t, n));
                    }
                };
                let a = d[0] * d[0] + d[1] * d[1];
                if a > 0.0 {
                    let b = o[0] * d[0] + o[1] * d[1];
                    let c = o[0] * o[0] + o[1] * o[1] - radius * radius;
                    let disc = b * b - a * c;
                    if disc >= 0.0 {
                        for t in [(-b - disc.sqrt()) / a, (-b + disc.sqrt()) / a] {
                            let p = at(o, d, t);
                            if p[2].abs() <= half_height {
                                keep(t, normalize([p[0], p[1], 0.0]));
                            }
                        }
                    }
                }
                if d[2] != 0.0 {
                    for z in [-half_height, half_height] {
                        let t = (z - o[2]) / d[2];
                        let p = at(o, d, t);
                        if p[0] * p[0] + p[1] * p[1] <= radius * radius {
                            keep(t, [0.0, 0.0, z.signum()]);
                        }
                    }
                }
                best
            }
            Shape::Plane => {
                if d[2] == 0.0 {
                    return None;
                }
                let t = -o[2] / d[2];
                (t > T_EPS).then_some((t, [0.0, 0.0, if o[2] >= 0.0 { 1.0 } else { -1.0 }]))
            }
        }
    }
}

/// A shape placed in the world by its world-from-object pose.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub id: u32,
    pub shape: Shape,
    pub pose: RigidTransform,
}

impl Primitive {
    pub fn validate(&self) -> Result<()> {
        if self.id == BACKGROUND_ID {
            return Err(GeometryError::InvalidPrimitive(format!("id {BACKGROUND_ID} is reserved for background")));
        }
        self.shape.validate()
    }
}

/// A ray-surface intersection in camera coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    /// Ray parameter; equals z-depth for rays with unit z.
    pub t: f64,
    pub id: u32,
    /// Unit outward normal in the camera frame.
    pub normal: [f64; 3],
}

/// Nearest hit of `camera_from_object * shape` along the camera-frame ray `o + t d`.
pub fn intersect(shape: &Shape, camera_from_object: &RigidTransform, o: [f64; 3], d: [f64; 3]) -> Option<(f64, [f64; 3])> {
    let inv = camera_from_object.invert();
    let (t, n) = shape.intersect_local(inv.apply_point(o), inv.apply_vector(d))?;
    Some((t, camera_from_object.apply_vector(n)))
}

/// Every primitive's nearest hit along one pixel ray, sorted front to back.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PixelHits {
    pub hits: Vec<Hit>,
}

impl PixelHits {
    pub fn first(&self) -> Option<&Hit> {
        self.hits.first()
    }

    /// Nearest hit on a primitive for which `opaque` holds.
    pub fn first_where(&self, mut opaque: impl FnMut(u32) -> bool) -> Option<&Hit> {
        self.hits.iter().find(|h| opaque(h.id))
    }
}

/// Per-pixel hit lists for one camera.
#[derive(Clone, Debug)]
pub struct SceneRender {
    width: usize,
    height: usize,
    pixels: Vec<PixelHits>,
}

impl SceneRender {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel(&self, u: usize, v: usize) -> &PixelHits {
        &self.pixels[v * self.width + u]
    }

    /// Depth of the first surface, `0` on background.
    pub fn depth(&self) -> DepthMap {
        self.depth_where(|_| true)
    }

    /// Depth of the first surface whose id satisfies `visible`; `0` if none.
    pub fn depth_where(&self, mut visible: impl FnMut(u32) -> bool) -> DepthMap {
        let data = self.pixels.iter().map(|p| p.first_where(&mut visible).map_or(0.0, |h| h.t as f32)).collect();
        DepthMap::from_vec(self.width, self.height, data).expect("sized from render")
    }

    pub fn ids(&self) -> IdMap {
        let data = self.pixels.iter().map(|p| p.first().map_or(BACKGROUND_ID, |h| h.id)).collect();
        IdMap::from_vec(self.width, self.height, data).expect("sized from render")
    }

    /// Analytic normals of the first surface, `[0, 0, 0]` on background.
    pub fn normals(&self) -> NormalMap {
        let data = self
            .pixels
            .iter()
            .map(|p| p.first().map_or([0.0; 3], |h| h.normal.map(|c| c as f32)))
            .collect();
        NormalMap::from_vec(self.width, self.height, data).expect("sized from render")
    }
}

/// Casts one ray through every pixel center of a camera at pose `camera_from_world`.
pub fn render_scene(
    primitives: &[Primitive],
    camera_from_world: &RigidTransform,
    intr: &CameraIntrinsics,
) -> Result<SceneRender> {
    intr.validate()?;
    for p in primitives {
        p.validate()?;
    }
    let placed: Vec<(u32, Shape, RigidTransform, RigidTransform)> = primitives
        .iter()
        .map(|p| {
            let cam_from_obj = camera_from_world.compose(&p.pose);
            (p.id, p.shape, cam_from_obj, cam_from_obj.invert())
        })
        .collect();
    let rows: Vec<Vec<PixelHits>> = (0..intr.height)
        .into_par_iter()
        .map(|v| {
            (0..intr.width)
                .map(|u| {
                    let d = intr.pixel_ray(u as f64, v as f64);
                    let mut hits: Vec<Hit> = placed
                        .iter()
                        .filter_map(|(id, shape, fwd, inv)| {
                            let (t, n) = shape.intersect_local(inv.translation(), inv.apply_vector(d))?;
                            Some(Hit { t, id: *id, normal: fwd.apply_vector(n) })
                        })
                        .collect();
                    hits.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.id.cmp(&b.id)));
                    PixelHits { hits }
                })
                .collect()
        })
        .collect();
    Ok(SceneRender { width: intr.width, height: intr.height, pixels: rows.into_iter().flatten().collect() })
}

/// Ground-truth depth and primitive ids of the first surface per pixel.
pub fn render_depth(
    primitives: &[Primitive],
    camera_from_world: &RigidTransform,
    intr: &CameraIntrinsics,
) -> Result<(DepthMap, IdMap)> {
    let scene = render_scene(primitives, camera_from_world, intr)?;
    Ok((scene.depth(), scene.ids()))
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = dot(v, v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn at(o: [f64; 3], d: [f64; 3], t: f64) -> [f64; 3] {
    [o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2]]
}
