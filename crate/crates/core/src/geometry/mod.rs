//! Primitive 3-D geometry used by planning and personalization.
//!
//! Lengths are millimetres throughout; areas reported by
//! [`cross_section_area`] are converted to cm².

pub mod io;
mod mesh;
mod plane;
mod rdp;
mod section;

pub use mesh::{project_to_surface, TriMesh};
pub(crate) use mesh::nearest_index;
pub use plane::{offset_plane, rotate_plane, Plane};
pub use rdp::rdp_simplify;
pub use section::{cross_section, cross_section_area, CrossSection};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;

/// Ordered contour with at least two vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline3(Vec<Point3>);

impl Polyline3 {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "polyline needs at least 2 vertices, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput("polyline has non-finite coordinates".into()));
        }
        Ok(Self(points))
    }

    pub fn points(&self) -> &[Point3] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Distance from `pk` to the infinite line through `p1` and `pn`.
pub fn perpendicular_deviation(pk: &Point3, p1: &Point3, pn: &Point3) -> Result<f64> {
    let chord = pn - p1;
    let len = chord.norm();
    if len == 0.0 {
        return Err(Error::Degenerate("segment endpoints coincide".into()));
    }
    Ok(chord.cross(&(p1 - pk)).norm() / len)
}
