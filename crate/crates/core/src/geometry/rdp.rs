use super::{perpendicular_deviation, Point3, Polyline3};
use crate::error::{Error, Result};

/// Ramer-Douglas-Peucker simplification.
///
/// Returns the retained vertex indices in ascending order, always including
/// both endpoints. A span is split at its maximal-deviation vertex when that
/// deviation is strictly greater than `tolerance` (mm); equal maxima split at
/// the lower index. A span whose endpoints coincide measures deviation as the
/// distance to that endpoint.
pub fn rdp_simplify(contour: &Polyline3, tolerance: f64) -> Result<Vec<usize>> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidInput(format!("RDP tolerance must be positive, got {tolerance}")));
    }
    let pts = contour.points();
    let last = pts.len() - 1;
    let mut keep = vec![false; pts.len()];
    keep[0] = true;
    keep[last] = true;

    let mut stack = vec![(0usize, last)];
    while let Some((first, end)) = stack.pop() {
        if end <= first + 1 {
            continue;
        }
        let mut best = (first, -1.0f64);
        for k in first + 1..end {
            let d = deviation(&pts[k], &pts[first], &pts[end]);
            if d > best.1 {
                best = (k, d);
            }
        }
        if best.1 > tolerance {
            keep[best.0] = true;
            stack.push((best.0, end));
            stack.push((first, best.0));
        }
    }
    Ok(keep.iter().enumerate().filter_map(|(i, &k)| k.then_some(i)).collect())
}

fn deviation(pk: &Point3, p1: &Point3, pn: &Point3) -> f64 {
    perpendicular_deviation(pk, p1, pn).unwrap_or_else(|_| (pk - p1).norm())
}
