use std::collections::HashMap;

use super::{Plane, Point3, TriMesh};
use crate::error::{Error, Result};

/// Planar section of a closed mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    /// Enclosed area in cm².
    pub area_cm2: f64,
    /// Number of closed intersection loops.
    pub loops: usize,
    /// Oriented intersection segments; the enclosed region lies to the left
    /// when viewed from the normal side.
    pub segments: Vec<(Point3, Point3)>,
}

/// Area (cm²) enclosed by the mesh/plane intersection; 0 when they miss.
pub fn cross_section_area(mesh: &TriMesh, plane: &Plane) -> Result<f64> {
    cross_section(mesh, plane).map(|s| s.area_cm2)
}

/// Slices a closed mesh.
///
/// Each crossing face contributes one segment oriented from the face winding,
/// so the loop areas are signed: separate loops add and nested loops (holes)
/// subtract. Vertices lying exactly on the plane count as being on the
/// positive side.
pub fn cross_section(mesh: &TriMesh, plane: &Plane) -> Result<CrossSection> {
    let open = mesh.open_edge_count();
    if open > 0 || mesh.faces().is_empty() {
        return Err(Error::OpenMesh { open_edges: open });
    }
    let n = plane.normal;
    let dist: Vec<f64> = mesh.vertices().iter().map(|p| plane.signed_distance(p)).collect();
    let above = |i: usize| dist[i] >= 0.0;

    let mut segments = Vec::new();
    let mut degree: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let mut twice_area = 0.0;

    for (fi, f) in mesh.faces().iter().enumerate() {
        let mut hits: Vec<((usize, usize), Point3)> = Vec::with_capacity(2);
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            if above(a) != above(b) {
                let t = dist[a] / (dist[a] - dist[b]);
                let pa = mesh.vertices()[a];
                let pb = mesh.vertices()[b];
                hits.push(((a.min(b), a.max(b)), pa + (pb - pa) * t));
            }
        }
        if hits.len() != 2 {
            continue;
        }
        let dir = n.cross(&mesh.face_normal(fi));
        let (mut p, mut q) = (hits[0], hits[1]);
        if (q.1 - p.1).dot(&dir) < 0.0 {
            std::mem::swap(&mut p, &mut q);
        }
        let seg_index = segments.len();
        degree.entry(p.0).or_default().push(seg_index);
        degree.entry(q.0).or_default().push(seg_index);
        twice_area += (p.1 - plane.origin).cross(&(q.1 - plane.origin)).dot(&n);
        segments.push(((p.0, q.0), (p.1, q.1)));
    }

    if degree.values().any(|v| v.len() != 2) {
        return Err(Error::OpenMesh { open_edges: degree.values().filter(|v| v.len() != 2).count() });
    }

    // Count loops by walking segment adjacency.
    let mut visited = vec![false; segments.len()];
    let mut loops = 0;
    for start in 0..segments.len() {
        if visited[start] {
            continue;
        }
        loops += 1;
        let mut stack = vec![start];
        while let Some(s) = stack.pop() {
            if std::mem::replace(&mut visited[s], true) {
                continue;
            }
            let (ka, kb) = segments[s].0;
            for key in [ka, kb] {
                stack.extend(degree[&key].iter().copied().filter(|&o| !visited[o]));
            }
        }
    }

    Ok(CrossSection {
        area_cm2: (0.5 * twice_area).abs() / 100.0,
        loops,
        segments: segments.into_iter().map(|(_, pts)| pts).collect(),
    })
}
