//! Rigid-body poses.
//!
//! A [`Pose`] is a unit quaternion plus a translation. Quaternions are kept in
//! a canonical hemisphere (`w >= 0`, ties broken on the first nonzero vector
//! component) so that every rotation has exactly one representative. That
//! matters for the particle statistics downstream, which treat pose
//! components as plain numbers.

use std::fmt;

use nalgebra::{Matrix3, Matrix4, Point3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quaternions whose squared norm is this close to one are left untouched by
/// normalization, so that encode/decode round trips are exact.
const UNIT_NORM_SQ_TOLERANCE: f64 = 1e-14;

/// Below this norm a quaternion has no usable direction.
pub const MIN_QUATERNION_NORM: f64 = 1e-12;

/// A rigid transform `x -> R x + t`.
#[derive(Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

/// Flat optimizer-facing parameterization `(qw, qx, qy, qz, tx, ty, tz)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseVector(pub [f64; 7]);

/// Z-Y-X Euler angles in radians: `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

fn canonical_unit(mut q: [f64; 4]) -> Result<UnitQuaternion<f64>> {
    let norm_sq: f64 = q.iter().map(|c| c * c).sum();
    if !norm_sq.is_finite() || norm_sq.sqrt() <= MIN_QUATERNION_NORM {
        return Err(Error::DegenerateQuaternion {
            norm: norm_sq.sqrt(),
        });
    }
    if (norm_sq - 1.0).abs() > UNIT_NORM_SQ_TOLERANCE {
        let norm = norm_sq.sqrt();
        for c in &mut q {
            *c /= norm;
        }
    }
    let first_nonzero = q.iter().copied().find(|c| *c != 0.0).unwrap_or(1.0);
    if first_nonzero < 0.0 {
        for c in &mut q {
            *c = -*c;
        }
    }
    // Avoid -0.0 so that equal rotations compare bit-identical.
    for c in &mut q {
        if *c == 0.0 {
            *c = 0.0;
        }
    }
    Ok(UnitQuaternion::new_unchecked(Quaternion::new(
        q[0], q[1], q[2], q[3],
    )))
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose from raw quaternion components `(w, x, y, z)` and a
    /// translation. The quaternion is normalized and canonicalized.
    pub fn new(quaternion: [f64; 4], translation: Vector3<f64>) -> Result<Self> {
        Ok(Self {
            rotation: canonical_unit(quaternion)?,
            translation,
        })
    }

    pub fn from_rotation(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        let q = rotation.quaternion();
        Self::new([q.w, q.i, q.j, q.k], translation).expect("unit quaternion is never degenerate")
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let axis = nalgebra::Unit::new_normalize(axis);
        Self::from_rotation(UnitQuaternion::from_axis_angle(&axis, angle), translation)
    }

    pub fn from_euler(angles: EulerAngles, translation: Vector3<f64>) -> Self {
        Self::from_rotation(
            UnitQuaternion::from_euler_angles(angles.roll, angles.pitch, angles.yaw),
            translation,
        )
    }

    /// Rotation about the z axis.
    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(Vector3::z(), angle, Vector3::zeros())
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Quaternion components `(w, x, y, z)`.
    pub fn quaternion(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        self.rotation * p + self.translation
    }

    /// Applies the pose to every point, preserving order.
    pub fn apply(&self, points: &[Point3<f64>]) -> Vec<Point3<f64>> {
        let r = self.rotation_matrix();
        points.iter().map(|p| r * p + self.translation).collect()
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let q = (self.rotation * other.rotation).into_inner();
        Pose {
            rotation: canonical_unit([q.w, q.i, q.j, q.k])
                .expect("product of unit quaternions is never degenerate"),
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose::from_rotation(inv, -(inv * self.translation))
    }

    pub fn to_vector(&self) -> PoseVector {
        let [w, x, y, z] = self.quaternion();
        let t = self.translation;
        PoseVector([w, x, y, z, t.x, t.y, t.z])
    }

    pub fn from_vector(v: &PoseVector) -> Result<Pose> {
        let [w, x, y, z, tx, ty, tz] = v.0;
        Pose::new([w, x, y, z], Vector3::new(tx, ty, tz))
    }

    pub fn euler(&self) -> EulerAngles {
        let (roll, pitch, yaw) = self.rotation.euler_angles();
        EulerAngles { roll, pitch, yaw }
    }

    /// Geodesic rotation angle to `other`, in `[0, π]`. Computed from the
    /// chord between the two quaternions, so equal rotations give exactly 0.
    pub fn rotation_distance(&self, other: &Pose) -> f64 {
        let a = self.rotation.coords;
        let mut b = other.rotation.coords;
        if a.dot(&b) < 0.0 {
            b = -b;
        }
        4.0 * (a - b).norm().atan2((a + b).norm())
    }

    pub fn translation_distance(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl fmt::Debug for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [w, x, y, z] = self.quaternion();
        let t = self.translation;
        write!(
            f,
            "Pose(q=[{w:.6}, {x:.6}, {y:.6}, {z:.6}], t=[{:.6}, {:.6}, {:.6}])",
            t.x, t.y, t.z
        )
    }
}

pub fn rotation_distance(a: &Pose, b: &Pose) -> f64 {
    a.rotation_distance(b)
}

pub fn translation_distance(a: &Pose, b: &Pose) -> f64 {
    a.translation_distance(b)
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w >= PI {
        w - TAU
    } else {
        w
    }
}

/// Serialized form shared by every JSON file the tool reads or writes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        let [qw, qx, qy, qz, tx, ty, tz] = p.to_vector().0;
        Self {
            qw,
            qx,
            qy,
            qz,
            tx,
            ty,
            tz,
        }
    }
}

impl TryFrom<PoseRecord> for Pose {
    type Error = Error;

    fn try_from(r: PoseRecord) -> Result<Self> {
        let v = [r.qw, r.qx, r.qy, r.qz, r.tx, r.ty, r.tz];
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("pose has non-finite components".into()));
        }
        Pose::from_vector(&PoseVector(v))
    }
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PoseRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = PoseRecord::deserialize(d)?;
        Pose::try_from(rec).map_err(serde::de::Error::custom)
    }
}
