use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vec3::zeros() }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self { rotation: self.rotation * other.rotation, translation: self.rotation * other.translation + self.translation }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    pub fn validate(&self) -> Result<()> {
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        if err > 1e-9 || (self.rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("rotation is not proper orthonormal".into()));
        }
        Ok(())
    }
}

/// Uniform scale, rotation and translation: `x ↦ s·R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl SimilarityTransform {
    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.scale * (self.rotation * p.coords) + self.translation)
    }
}

pub(crate) fn centroid(points: &[Point3]) -> Point3 {
    let sum = points.iter().fold(Vec3::zeros(), |acc, p| acc + p.coords);
    Point3::from(sum / points.len() as f64)
}

fn covariance(points: &[Point3], c: &Point3) -> Matrix3<f64> {
    points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - c;
        acc + d * d.transpose()
    }) / points.len() as f64
}

/// Rejects clouds with fewer than three points or no spread in two directions.
pub fn check_cloud(points: &[Point3], what: &str) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!("{what} needs at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|p| !p.coords.iter().all(|v| v.is_finite())) {
        return Err(Error::InvalidInput(format!("{what} has non-finite coordinates")));
    }
    let eig = SymmetricEigen::new(covariance(points, &centroid(points)));
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if !(ev[0] > 0.0) || ev[1] <= 1e-12 * ev[0] {
        return Err(Error::Degenerate(format!("{what} is collinear")));
    }
    Ok(())
}

fn cross_covariance(src: &[Point3], dst: &[Point3], cs: &Point3, cd: &Point3) -> Matrix3<f64> {
    src.iter().zip(dst).fold(Matrix3::zeros(), |acc, (s, d)| acc + (d - cd) * (s - cs).transpose())
}

/// Rotation `R` maximizing `tr(Rᵀ H)` with `det R = +1`.
fn proper_rotation(h: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.expect("requested U"), svd.v_t.expect("requested V"));
    let d = (u * vt).determinant().signum();
    u * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * vt
}

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]`.
pub fn kabsch(src: &[Point3], dst: &[Point3]) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(Error::DimensionMismatch { expected: src.len(), got: dst.len() });
    }
    if src.is_empty() {
        return Err(Error::Empty("correspondence set"));
    }
    let (cs, cd) = (centroid(src), centroid(dst));
    let r = proper_rotation(&cross_covariance(src, dst, &cs, &cd));
    Ok(RigidTransform { rotation: r, translation: cd.coords - r * cs.coords })
}

/// Least-squares similarity transform mapping `src[i]` onto `dst[i]`.
pub fn fit_similarity(src: &[Point3], dst: &[Point3]) -> Result<SimilarityTransform> {
    check_cloud(src, "similarity source")?;
    let rigid = kabsch(src, dst)?;
    let (cs, cd) = (centroid(src), centroid(dst));
    let var: f64 = src.iter().map(|p| (p - cs).norm_squared()).sum();
    let h = cross_covariance(src, dst, &cs, &cd);
    let scale = (rigid.rotation.transpose() * h).trace() / var;
    Ok(SimilarityTransform { scale, rotation: rigid.rotation, translation: cd.coords - scale * (rigid.rotation * cs.coords) })
}

fn nearest<'a>(p: &Point3, cloud: &'a [Point3]) -> &'a Point3 {
    let i = crate::geometry::nearest_index(p, cloud).expect("cloud is non-empty");
    &cloud[i]
}

fn icp(template: &[Point3], target: &[Point3], start: RigidTransform, max_iters: usize, tol: f64) -> Result<(RigidTransform, f64)> {
    let mut t = start;
    let mut prev = f64::INFINITY;
    for _ in 0..max_iters.max(1) {
        let moved: Vec<Point3> = template.iter().map(|p| t.apply(p)).collect();
        let matched: Vec<Point3> = moved.iter().map(|p| *nearest(p, target)).collect();
        let mse = moved.iter().zip(&matched).map(|(a, b)| (a - b).norm_squared()).sum::<f64>() / moved.len() as f64;
        if (prev - mse).abs() < tol {
            return Ok((t, mse));
        }
        prev = mse;
        t = kabsch(template, &matched)?;
    }
    let mse = template.iter().map(|p| (t.apply(p) - nearest(&t.apply(p), target)).norm_squared()).sum::<f64>() / template.len() as f64;
    Ok((t, mse))
}

/// Centroid alignment followed by nearest-point ICP. ICP is started from the
/// identity rotation and from the four proper principal-axis alignments; the
/// run with the lowest final mean squared error wins.
pub fn rigid_init(template: &[Point3], target: &[Point3], max_iters: usize, tol: f64) -> Result<RigidTransform> {
    check_cloud(template, "template cloud")?;
    check_cloud(target, "target cloud")?;
    let (ct, cg) = (centroid(template), centroid(target));
    let axes = |pts: &[Point3], c: &Point3| {
        let eig = SymmetricEigen::new(covariance(pts, c));
        let mut order = [0usize, 1, 2];
        order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
        Matrix3::from_columns(&order.map(|i| eig.eigenvectors.column(i).into_owned()))
    };
    let (ut, ug) = (axes(template, &ct), axes(target, &cg));

    let mut rotations = vec![Matrix3::identity()];
    for signs in [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0], [-1.0, -1.0, -1.0], [-1.0, 1.0, 1.0], [1.0, -1.0, 1.0], [1.0, 1.0, -1.0]] {
        let r = ug * Matrix3::from_diagonal(&Vec3::from(signs)) * ut.transpose();
        if r.determinant() > 0.0 {
            rotations.push(r);
        }
    }
    let mut best: Option<(RigidTransform, f64)> = None;
    for r in rotations {
        let start = RigidTransform { rotation: r, translation: cg.coords - r * ct.coords };
        let (t, mse) = icp(template, target, start, max_iters, tol)?;
        if best.as_ref().is_none_or(|(_, b)| mse < *b) {
            best = Some((t, mse));
        }
    }
    Ok(best.expect("identity start always runs").0)
}
