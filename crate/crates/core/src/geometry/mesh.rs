use std::collections::HashMap;

use super::{Point3, Vec3};
use crate::error::{Error, Result};

/// Indexed triangle mesh. Faces are wound counter-clockwise seen from outside.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point3>,
    faces: Vec<[usize; 3]>,
}

const DEGENERATE_AREA: f64 = 1e-14;

impl TriMesh {
    /// Validates indices and drops zero-area faces.
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(bad) = vertices.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput(format!("vertex {bad} has non-finite coordinates")));
        }
        let n = vertices.len();
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::InvalidInput(format!("face {i} references a vertex out of range (have {n})")));
            }
        }
        let faces = faces
            .into_iter()
            .filter(|f| {
                f[0] != f[1] && f[1] != f[2] && f[0] != f[2] && {
                    let [a, b, c] = f.map(|i| vertices[i]);
                    (b - a).cross(&(c - a)).norm() > DEGENERATE_AREA
                }
            })
            .collect();
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Number of undirected edges not shared by exactly two faces.
    pub fn open_edge_count(&self) -> usize {
        let mut uses: HashMap<(usize, usize), u32> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *uses.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        uses.values().filter(|&&c| c != 2).count()
    }

    pub fn is_closed(&self) -> bool {
        !self.faces.is_empty() && self.open_edge_count() == 0
    }

    /// Signed enclosed volume (mm³); positive for outward winding.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| self.vertices[i].coords);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn face_normal(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.faces[face].map(|i| self.vertices[i]);
        (b - a).cross(&(c - a))
    }

    pub fn transformed(&self, f: impl Fn(&Point3) -> Point3) -> Self {
        Self { vertices: self.vertices.iter().map(f).collect(), faces: self.faces.clone() }
    }

    /// Axis-aligned box.
    pub fn cuboid(min: Point3, max: Point3) -> Self {
        let v = |x: bool, y: bool, z: bool| {
            Point3::new(if x { max.x } else { min.x }, if y { max.y } else { min.y }, if z { max.z } else { min.z })
        };
        let vertices = vec![
            v(false, false, false),
            v(true, false, false),
            v(true, true, false),
            v(false, true, false),
            v(false, false, true),
            v(true, false, true),
            v(true, true, true),
            v(false, true, true),
        ];
        let faces = vec![
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [1, 2, 6],
            [1, 6, 5],
            [2, 3, 7],
            [2, 7, 6],
            [3, 0, 4],
            [3, 4, 7],
        ];
        Self { vertices, faces }
    }

    /// Latitude/longitude tessellated ellipsoid with poles on the z axis.
    pub fn ellipsoid(center: Point3, radii: Vec3, n_lat: usize, n_lon: usize) -> Self {
        let n_lat = n_lat.max(2);
        let n_lon = n_lon.max(3);
        let mut vertices = Vec::with_capacity(2 + (n_lat - 1) * n_lon);
        vertices.push(center + Vec3::new(0.0, 0.0, radii.z));
        for i in 1..n_lat {
            let theta = std::f64::consts::PI * i as f64 / n_lat as f64;
            for j in 0..n_lon {
                let phi = std::f64::consts::TAU * j as f64 / n_lon as f64;
                vertices.push(
                    center
                        + Vec3::new(
                            radii.x * theta.sin() * phi.cos(),
                            radii.y * theta.sin() * phi.sin(),
                            radii.z * theta.cos(),
                        ),
                );
            }
        }
        let south = vertices.len();
        vertices.push(center - Vec3::new(0.0, 0.0, radii.z));
        let ring = |i: usize, j: usize| 1 + (i - 1) * n_lon + (j % n_lon);
        let mut faces = Vec::new();
        for j in 0..n_lon {
            faces.push([0, ring(1, j), ring(1, j + 1)]);
        }
        for i in 1..n_lat - 1 {
            for j in 0..n_lon {
                let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
                faces.push([a, c, d]);
                faces.push([a, d, b]);
            }
        }
        for j in 0..n_lon {
            faces.push([south, ring(n_lat - 1, j + 1), ring(n_lat - 1, j)]);
        }
        Self { vertices, faces }
    }

    pub fn sphere(center: Point3, radius: f64, n_lat: usize, n_lon: usize) -> Self {
        Self::ellipsoid(center, Vec3::repeat(radius), n_lat, n_lon)
    }
}

/// Index of the mesh vertex closest to `p`; ties go to the lowest index.
pub fn project_to_surface(p: &Point3, mesh: &TriMesh) -> Result<usize> {
    nearest_index(p, mesh.vertices()).ok_or(Error::Empty("mesh"))
}

pub(crate) fn nearest_index(p: &Point3, points: &[Point3]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, q) in points.iter().enumerate() {
        let d = (q - p).norm_squared();
        match best {
            Some((_, bd)) if d >= bd => {}
            _ => best = Some((i, d)),
        }
    }
    best.map(|(i, _)| i)
}
