use serde::{Deserialize, Serialize};

use super::{Point3, Vec3};
use crate::error::{Error, Result};

/// Oriented cut plane with a local frame.
///
/// The local frame is `(roll_axis, pitch_axis, normal)` = local `(x, y, z)`,
/// right-handed. The local z axis points toward the defect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub origin: Point3,
    pub normal: Vec3,
    pub roll_axis: Vec3,
    pub pitch_axis: Vec3,
}

impl Plane {
    /// Builds a plane from a normal and a hint for the roll axis; the hint is
    /// projected onto the plane and the pitch axis completes the frame.
    pub fn new(origin: Point3, normal: Vec3, roll_hint: Vec3) -> Result<Self> {
        let n = normal
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Degenerate("plane normal has zero length".into()))?;
        let roll = (roll_hint - n * roll_hint.dot(&n))
            .try_normalize(1e-9)
            .ok_or_else(|| Error::Degenerate("roll hint is parallel to the normal".into()))?;
        Ok(Self { origin, normal: n, roll_axis: roll, pitch_axis: n.cross(&roll) })
    }

    /// Plane with an arbitrary in-plane frame.
    pub fn from_normal(origin: Point3, normal: Vec3) -> Result<Self> {
        let hint = if normal.x.abs() < 0.9 * normal.norm() { Vec3::x() } else { Vec3::y() };
        Self::new(origin, normal, hint)
    }

    pub fn signed_distance(&self, p: &Point3) -> f64 {
        (p - self.origin).dot(&self.normal)
    }

    /// Largest deviation of the frame from orthonormality.
    pub fn orthonormality_error(&self) -> f64 {
        let axes = [self.roll_axis, self.pitch_axis, self.normal];
        let mut err = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((axes[i].dot(&axes[j]) - target).abs());
            }
        }
        err.max((self.roll_axis.cross(&self.pitch_axis) - self.normal).norm())
    }
}

/// Rotates about the local roll axis, then about the (already rolled) local
/// pitch axis. Angles in degrees, right-hand rule. The origin stays fixed.
pub fn rotate_plane(plane: &Plane, roll_deg: f64, pitch_deg: f64) -> Plane {
    use nalgebra::{Rotation3, Unit};

    let roll = Rotation3::from_axis_angle(&Unit::new_normalize(plane.roll_axis), roll_deg.to_radians());
    let pitch_axis = roll * plane.pitch_axis;
    let pitch = Rotation3::from_axis_angle(&Unit::new_normalize(pitch_axis), pitch_deg.to_radians());
    let total = pitch * roll;
    let mut out = Plane {
        origin: plane.origin,
        normal: total * plane.normal,
        roll_axis: total * plane.roll_axis,
        pitch_axis: total * plane.pitch_axis,
    };
    // Re-orthonormalize so long compositions do not drift.
    out.normal = out.normal.normalize();
    out.roll_axis = (out.roll_axis - out.normal * out.roll_axis.dot(&out.normal)).normalize();
    out.pitch_axis = out.normal.cross(&out.roll_axis);
    out
}

pub fn offset_plane(plane: &Plane, distance: f64) -> Plane {
    Plane { origin: plane.origin + plane.normal * distance, ..*plane }
}
