use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cross_section_area, offset_plane, Plane, Point3, TriMesh, Vec3};

/// Landmark inputs for the scan cross-section planes. The Frankfort
/// horizontal plane is supplied directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScsLandmarks {
    pub frankfort_origin: Point3,
    /// Points superiorly.
    pub frankfort_normal: Vec3,
    /// Any vector with a positive anterior component.
    pub anterior: Vec3,
    pub gonion_left: Point3,
    pub gonion_right: Point3,
    pub lateral_pole_left: Point3,
    pub lateral_pole_right: Point3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScsProtocol {
    pub masseter_tilt_deg: f64,
    pub masseter_offset_mm: f64,
    pub temporalis_offset_mm: f64,
    pub lateral_pterygoid_offset_mm: f64,
    /// Neighbouring planes at ±step, ±2·step, … up to this distance.
    pub neighbour_range_mm: f64,
    pub neighbour_step_mm: f64,
}

impl Default for ScsProtocol {
    fn default() -> Self {
        Self {
            masseter_tilt_deg: 30.0,
            masseter_offset_mm: 25.0,
            temporalis_offset_mm: 10.0,
            lateral_pterygoid_offset_mm: 10.0,
            neighbour_range_mm: 5.0,
            neighbour_step_mm: 1.0,
        }
    }
}

struct Frame {
    up: Vec3,
    along: Vec3,
    forward: Vec3,
}

/// Frame with `along` the in-plane direction of `a → b`, `forward` its
/// anterior-pointing perpendicular in the Frankfort plane.
fn frame(l: &ScsLandmarks, a: &Point3, b: &Point3) -> Result<Frame> {
    let up = l.frankfort_normal.try_normalize(1e-12).ok_or_else(|| Error::Degenerate("Frankfort normal has zero length".into()))?;
    let axis = b - a;
    let along = (axis - up * axis.dot(&up))
        .try_normalize(1e-9)
        .ok_or_else(|| Error::Degenerate("bilateral landmarks coincide in the Frankfort plane".into()))?;
    let mut forward = up.cross(&along);
    let ant = l.anterior.dot(&forward);
    if ant == 0.0 || !ant.is_finite() {
        return Err(Error::Degenerate("anterior direction is parallel to the bilateral axis".into()));
    }
    if ant < 0.0 {
        forward = -forward;
    }
    Ok(Frame { up, along, forward })
}

/// Tilted `masseter_tilt_deg` anterosuperiorly about the gonion axis and
/// shifted along its normal; shared by masseter and medial pterygoid.
pub fn masseter_plane(l: &ScsLandmarks, p: &ScsProtocol) -> Result<Plane> {
    let f = frame(l, &l.gonion_left, &l.gonion_right)?;
    let t = p.masseter_tilt_deg.to_radians();
    let normal = f.up * t.cos() + f.forward * t.sin();
    let mid = Point3::from((l.gonion_left.coords + l.gonion_right.coords) * 0.5);
    Ok(offset_plane(&Plane::new(mid, normal, f.along)?, p.masseter_offset_mm))
}

pub fn temporalis_plane(l: &ScsLandmarks, p: &ScsProtocol) -> Result<Plane> {
    let f = frame(l, &l.gonion_left, &l.gonion_right)?;
    Ok(offset_plane(&Plane::new(l.frankfort_origin, f.up, f.along)?, p.temporalis_offset_mm))
}

/// Perpendicular to the Frankfort plane through the lateral poles, shifted
/// anteriorly.
pub fn lateral_pterygoid_plane(l: &ScsLandmarks, p: &ScsProtocol) -> Result<Plane> {
    let f = frame(l, &l.lateral_pole_left, &l.lateral_pole_right)?;
    let mid = Point3::from((l.lateral_pole_left.coords + l.lateral_pole_right.coords) * 0.5);
    Ok(offset_plane(&Plane::new(mid, f.forward, f.along)?, p.lateral_pterygoid_offset_mm))
}

pub fn reference_plane(group: &str, l: &ScsLandmarks, p: &ScsProtocol) -> Result<Plane> {
    match group {
        "masseter" | "medial_pterygoid" => masseter_plane(l, p),
        "temporalis" => temporalis_plane(l, p),
        "lateral_pterygoid" => lateral_pterygoid_plane(l, p),
        _ => Err(Error::Unknown { kind: "muscle group", name: group.to_string() }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScsResult {
    pub area_cm2: f64,
    pub offset_mm: f64,
    /// `(offset, area)` for every plane evaluated, in offset order.
    pub areas: Vec<(f64, f64)>,
}

/// Largest cross-section over the reference plane and its parallel
/// neighbours. Ties go to the plane nearest the reference.
pub fn extract_scs(mesh: &TriMesh, reference: &Plane, p: &ScsProtocol) -> Result<ScsResult> {
    if !(p.neighbour_step_mm > 0.0) || !(p.neighbour_range_mm >= 0.0) {
        return Err(Error::InvalidInput("neighbour step must be positive and range nonnegative".into()));
    }
    let k = (p.neighbour_range_mm / p.neighbour_step_mm + 1e-9).floor() as i64;
    let mut areas = Vec::with_capacity(2 * k as usize + 1);
    for i in -k..=k {
        let offset = i as f64 * p.neighbour_step_mm;
        areas.push((offset, cross_section_area(mesh, &offset_plane(reference, offset))?));
    }
    let (offset_mm, area_cm2) = areas
        .iter()
        .copied()
        .fold(None, |best: Option<(f64, f64)>, (o, a)| match best {
            Some((bo, ba)) if ba > a || (ba == a && bo.abs() <= o.abs()) => Some((bo, ba)),
            _ => Some((o, a)),
        })
        .expect("at least the reference plane");
    Ok(ScsResult { area_cm2, offset_mm, areas })
}
