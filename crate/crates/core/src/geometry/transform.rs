use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::{GeometryError, Result};

/// Orthonormality drift tolerated when validating user-supplied matrices.
const VALIDATION_TOL: f64 = 1e-9;
/// Drift above which composition re-orthonormalizes the rotation block.
const DRIFT_TOL: f64 = 1e-12;

/// An SE(3) element as rotation `R` and translation `t` (meters);
/// maps points by `p -> R p + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 4]; 4]", into = "[[f64; 4]; 4]")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn from_translation(t: [f64; 3]) -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::from(t) }
    }

    /// Rotation of `angle` radians about `axis`, followed by translation `t`.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64, t: [f64; 3]) -> Self {
        let rot = match Unit::try_new(Vector3::from(axis), 1e-15) {
            Some(axis) => Rotation3::from_axis_angle(&axis, angle).into_inner(),
            None => Matrix3::identity(),
        };
        Self { rotation: rot, translation: Vector3::from(t) }
    }

    /// Checked constructor from a rotation block (row-major) and translation.
    pub fn from_parts(rotation: [[f64; 3]; 3], translation: [f64; 3]) -> Result<Self> {
        let r = Matrix3::from_fn(|i, j| rotation[i][j]);
        let err = orthonormality_error(&r);
        if err > VALIDATION_TOL || !r.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidTransform(format!("rotation not orthonormal (error {err:e})")));
        }
        let det = r.determinant();
        if (det - 1.0).abs() > VALIDATION_TOL {
            return Err(GeometryError::InvalidTransform(format!("rotation determinant {det}, expected +1")));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidTransform("non-finite translation".into()));
        }
        Ok(Self { rotation: r, translation: Vector3::from(translation) })
    }

    /// Checked constructor from a row-major homogeneous matrix.
    pub fn from_matrix(m: [[f64; 4]; 4]) -> Result<Self> {
        if m[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(GeometryError::InvalidTransform(format!("last row {:?}, expected [0, 0, 0, 1]", m[3])));
        }
        let r = [[m[0][0], m[0][1], m[0][2]], [m[1][0], m[1][1], m[1][2]], [m[2][0], m[2][1], m[2][2]]];
        Self::from_parts(r, [m[0][3], m[1][3], m[2][3]])
    }

    /// Camera-from-world pose of a camera at `eye` looking at `target`.
    /// `up` is the world direction that should appear upward (−y) in the image.
    pub fn look_at(eye: [f64; 3], target: [f64; 3], up: [f64; 3]) -> Result<Self> {
        let eye = Vector3::from(eye);
        let forward = (Vector3::from(target) - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| GeometryError::InvalidTransform("eye and target coincide".into()))?;
        let right = forward
            .cross(&Vector3::from(up))
            .try_normalize(1e-12)
            .ok_or_else(|| GeometryError::InvalidTransform("up is parallel to the viewing direction".into()))?;
        let down = forward.cross(&right);
        // rows are the camera axes expressed in world coordinates
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Ok(Self { rotation: r, translation: -(r * eye) })
    }

    pub fn rotation(&self) -> [[f64; 3]; 3] {
        let r = &self.rotation;
        [[r[(0, 0)], r[(0, 1)], r[(0, 2)]], [r[(1, 0)], r[(1, 1)], r[(1, 2)]], [r[(2, 0)], r[(2, 1)], r[(2, 2)]]]
    }

    pub fn translation(&self) -> [f64; 3] {
        self.translation.into()
    }

    /// Row-major homogeneous matrix.
    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let m = self.matrix4();
        std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
    }

    pub fn matrix4(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn apply_point(&self, p: [f64; 3]) -> [f64; 3] {
        (self.rotation * Vector3::from(p) + self.translation).into()
    }

    pub fn apply_vector(&self, v: [f64; 3]) -> [f64; 3] {
        (self.rotation * Vector3::from(v)).into()
    }

    /// `self * other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        let mut rotation = self.rotation * other.rotation;
        if orthonormality_error(&rotation) > DRIFT_TOL {
            rotation = nearest_rotation(&rotation);
        }
        Self { rotation, translation: self.rotation * other.translation + self.translation }
    }

    /// Closed-form inverse `(R^T, -R^T t)`.
    pub fn invert(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Largest entry of `|R^T R - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.rotation)
    }

    /// Largest absolute entry difference between the homogeneous matrices.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.matrix4() - other.matrix4()).abs().max()
    }
}

impl TryFrom<[[f64; 4]; 4]> for RigidTransform {
    type Error = GeometryError;
    fn try_from(m: [[f64; 4]; 4]) -> Result<Self> {
        Self::from_matrix(m)
    }
}

impl From<RigidTransform> for [[f64; 4]; 4] {
    fn from(t: RigidTransform) -> Self {
        t.to_matrix()
    }
}

fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).abs().max()
}

/// Projects a near-rotation onto SO(3) through its polar factor.
fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * vt;
    }
    r
}

/// Pose of an object in a camera through the tracker chain:
/// `T_cam^obj = T_cam^tracker * T_tracker^marker * T_marker^obj`.
pub fn object_pose_in_camera(
    cam_from_tracker: &RigidTransform,
    tracker_from_marker: &RigidTransform,
    marker_from_object: &RigidTransform,
) -> RigidTransform {
    cam_from_tracker.compose(tracker_from_marker).compose(marker_from_object)
}

/// Carries an object pose observed at viewpoint `k0` over to viewpoint `k`:
/// `T_k * T_k0^-1 * pose_k0`, where `T_k` are camera-from-reference poses.
pub fn propagate_pose(
    cam_k_from_ref: &RigidTransform,
    cam_k0_from_ref: &RigidTransform,
    pose_in_k0: &RigidTransform,
) -> RigidTransform {
    cam_k_from_ref.compose(&cam_k0_from_ref.invert()).compose(pose_in_k0)
}
