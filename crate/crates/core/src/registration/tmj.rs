use serde::{Deserialize, Serialize};

use super::cpd::DeformationField;
use crate::error::{Error, Result};
use crate::geometry::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TmjParams {
    pub k_nn: usize,
    pub epsilon: f64,
    pub q_disc: f64,
    pub q_capsule: f64,
}

impl Default for TmjParams {
    fn default() -> Self {
        Self { k_nn: 20, epsilon: 1e-8, q_disc: 0.5, q_capsule: 1.0 }
    }
}

/// Mean distance from `x` to its `k` nearest points in `refs`.
pub fn knn_mean_distance(x: &Point3, refs: &[Point3], k: usize) -> Result<f64> {
    if k == 0 || refs.len() < k {
        return Err(Error::Degenerate(format!("reference cloud has {} points, need at least k = {k}", refs.len())));
    }
    let mut d: Vec<f64> = refs.iter().map(|r| (r - x).norm()).collect();
    d.select_nth_unstable_by(k - 1, f64::total_cmp);
    let mut near = d[..k].to_vec();
    near.sort_by(f64::total_cmp);
    Ok(near.iter().sum::<f64>() / k as f64)
}

/// `w_cond = (d_c+ε)^{−q} / ((d_c+ε)^{−q} + (d_f+ε)^{−q})`, `w_fossa = 1 − w_cond`.
pub fn blend_weights(d_cond: f64, d_fossa: f64, q: f64, epsilon: f64) -> Result<(f64, f64)> {
    if !(q > 0.0) || !(epsilon >= 0.0) {
        return Err(Error::InvalidInput(format!("blend needs q > 0 and ε ≥ 0, got q = {q}, ε = {epsilon}")));
    }
    let (a, b) = (d_cond + epsilon, d_fossa + epsilon);
    if !(a >= 0.0 && b >= 0.0) || (a == 0.0 && b == 0.0) {
        return Err(Error::Degenerate("blend distances are undefined".into()));
    }
    // Written as 1/(1 + (a/b)^q) to avoid overflow of a^{-q} near a = 0.
    let w = if b == 0.0 { 0.0 } else { 1.0 / (1.0 + (a / b).powf(q)) };
    Ok((w, 1.0 - w))
}

pub fn tmj_weights(x: &Point3, cond_refs: &[Point3], fossa_refs: &[Point3], q: f64, params: &TmjParams) -> Result<(f64, f64)> {
    let dc = knn_mean_distance(x, cond_refs, params.k_nn)?;
    let df = knn_mean_distance(x, fossa_refs, params.k_nn)?;
    blend_weights(dc, df, q, params.epsilon)
}

/// `x + w_cond·Δ_cond(x) + w_fossa·Δ_fossa(x)`.
pub fn tmj_blend(
    x: &Point3,
    field_cond: &DeformationField,
    field_fossa: &DeformationField,
    cond_refs: &[Point3],
    fossa_refs: &[Point3],
    q: f64,
    params: &TmjParams,
) -> Result<Point3> {
    let (wc, wf) = tmj_weights(x, cond_refs, fossa_refs, q, params)?;
    Ok(x + field_cond.displacement(x) * wc + field_fossa.displacement(x) * wf)
}
