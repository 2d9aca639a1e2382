use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpdParams {
    /// Kernel width in mm; `None` uses `beta_fraction` of the template
    /// bounding-box diagonal.
    pub beta: Option<f64>,
    pub beta_fraction: f64,
    pub lambda: f64,
    pub w_outlier: f64,
    pub max_iters: usize,
    /// Relative objective change that counts as converged.
    pub tol: f64,
}

impl Default for CpdParams {
    fn default() -> Self {
        Self { beta: None, beta_fraction: 0.1, lambda: 2.0, w_outlier: 0.1, max_iters: 150, tol: 1e-6 }
    }
}

/// `x ↦ x + Σ_m G_β(x, y_m)·w_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationField {
    pub control: Vec<Point3>,
    pub coefficients: Vec<Vec3>,
    pub beta: f64,
    pub converged: bool,
    pub iterations: usize,
    pub sigma2: f64,
    /// Penalized negative log-likelihood before each M-step, plus the final value.
    pub objective: Vec<f64>,
}

impl DeformationField {
    pub fn new(control: Vec<Point3>, coefficients: Vec<Vec3>, beta: f64) -> Result<Self> {
        if control.len() != coefficients.len() {
            return Err(Error::DimensionMismatch { expected: control.len(), got: coefficients.len() });
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidInput(format!("kernel width must be positive, got {beta}")));
        }
        Ok(Self { control, coefficients, beta, converged: true, iterations: 0, sigma2: 0.0, objective: Vec::new() })
    }

    pub fn displacement(&self, x: &Point3) -> Vec3 {
        let inv = 1.0 / (2.0 * self.beta * self.beta);
        self.control
            .iter()
            .zip(&self.coefficients)
            .fold(Vec3::zeros(), |acc, (y, w)| acc + w * (-(x - y).norm_squared() * inv).exp())
    }

    /// Displacement of every control point, `Δ(y_m) = T(y_m) − y_m`.
    pub fn control_displacements(&self) -> Vec<Vec3> {
        self.control.iter().map(|y| self.displacement(y)).collect()
    }
}

pub fn apply_field(field: &DeformationField, x: &Point3) -> Point3 {
    x + field.displacement(x)
}

pub fn bbox_diagonal(points: &[Point3]) -> f64 {
    let Some(first) = points.first() else { return 0.0 };
    let (lo, hi) = points.iter().fold((first.coords, first.coords), |(lo, hi), p| (lo.inf(&p.coords), hi.sup(&p.coords)));
    (hi - lo).norm()
}

fn gaussian_gram(points: &[Point3], beta: f64) -> DMatrix<f64> {
    let inv = 1.0 / (2.0 * beta * beta);
    DMatrix::from_fn(points.len(), points.len(), |i, j| (-(points[i] - points[j]).norm_squared() * inv).exp())
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn to_matrix(points: &[Point3]) -> DMatrix<f64> {
    DMatrix::from_fn(points.len(), 3, |i, j| points[i][j])
}

struct EStep {
    p: DMatrix<f64>,
    nll: f64,
}

/// Posterior correspondences and the data term of the negative
/// log-likelihood for the mixture `(1−w)/M·Σ N(x; T_m, σ²) + w/N`.
fn e_step(x: &[Point3], t: &DMatrix<f64>, sigma2: f64, w: f64) -> EStep {
    let (m, n) = (t.nrows(), x.len());
    let ln_c = 1.5 * (2.0 * std::f64::consts::PI * sigma2).ln() + w.ln() - (1.0 - w).ln() + (m as f64).ln() - (n as f64).ln();
    let ln_a = (1.0 - w).ln() - (m as f64).ln() - 1.5 * (2.0 * std::f64::consts::PI * sigma2).ln();
    let ln_b = w.ln() - (n as f64).ln();
    let mut p = DMatrix::zeros(m, n);
    let mut nll = 0.0;
    let mut a = vec![0.0; m];
    for (k, xn) in x.iter().enumerate() {
        let mut amax = f64::NEG_INFINITY;
        for (j, aj) in a.iter_mut().enumerate() {
            let d2 = (xn.x - t[(j, 0)]).powi(2) + (xn.y - t[(j, 1)]).powi(2) + (xn.z - t[(j, 2)]).powi(2);
            *aj = -d2 / (2.0 * sigma2);
            amax = amax.max(*aj);
        }
        let lse = amax + a.iter().map(|aj| (aj - amax).exp()).sum::<f64>().ln();
        let den = log_add_exp(lse, ln_c);
        for (j, aj) in a.iter().enumerate() {
            p[(j, k)] = (aj - den).exp();
        }
        nll -= log_add_exp(ln_a + lse, ln_b);
    }
    EStep { p, nll }
}

/// Coherent point drift of `template` onto `target` by EM.
///
/// Each iteration records the penalized negative log-likelihood
/// `−Σ_n log p(x_n) + λ/2·tr(WᵀGW)`, which EM cannot increase. Iteration
/// stops when its relative change drops below `params.tol`; hitting
/// `max_iters` first leaves `converged = false`.
pub fn cpd_register(template: &[Point3], target: &[Point3], params: &CpdParams) -> Result<DeformationField> {
    if template.is_empty() || target.is_empty() {
        return Err(Error::Empty("point cloud"));
    }
    let beta = params.beta.unwrap_or(params.beta_fraction * bbox_diagonal(template));
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidInput(format!("CPD kernel width must be positive, got {beta}")));
    }
    if !(params.lambda > 0.0) {
        return Err(Error::InvalidInput(format!("CPD lambda must be positive, got {}", params.lambda)));
    }
    if !(0.0..1.0).contains(&params.w_outlier) {
        return Err(Error::InvalidInput(format!("CPD outlier weight must lie in [0, 1), got {}", params.w_outlier)));
    }
    let (m, n) = (template.len(), target.len());
    let y = to_matrix(template);
    let xm = to_matrix(target);
    let g = gaussian_gram(template, beta);
    let mut w = DMatrix::<f64>::zeros(m, 3);
    let mut t = y.clone();

    let mut sigma2 = template
        .iter()
        .flat_map(|a| target.iter().map(move |b| (a - b).norm_squared()))
        .sum::<f64>()
        / (3.0 * m as f64 * n as f64);
    if !(sigma2 > 0.0) {
        // Template and target are the same single point.
        return DeformationField::new(template.to_vec(), vec![Vec3::zeros(); m], beta);
    }
    let floor = 1e-12 * sigma2;
    let penalty = |w: &DMatrix<f64>| 0.5 * params.lambda * (w.transpose() * &g * w).trace();
    let x_sq: DVector<f64> = DVector::from_iterator(n, target.iter().map(|p| p.coords.norm_squared()));

    let mut objective = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iters {
        let es = e_step(target, &t, sigma2, params.w_outlier);
        let value = es.nll + penalty(&w);
        if let Some(prev) = objective.last() {
            if ((prev - value) / f64::max(f64::abs(*prev), 1e-300)).abs() < params.tol {
                objective.push(value);
                converged = true;
                break;
            }
        }
        objective.push(value);
        iterations += 1;

        let p1 = es.p.column_sum();
        let pt1 = es.p.row_sum_tr();
        let np = p1.sum();
        if !(np > 0.0) {
            break;
        }
        let px = &es.p * &xm;
        let mut a = DMatrix::from_fn(m, m, |i, j| p1[i] * g[(i, j)]);
        for i in 0..m {
            a[(i, i)] += params.lambda * sigma2;
        }
        let rhs = &px - DMatrix::from_fn(m, 3, |i, j| p1[i] * y[(i, j)]);
        w = a.lu().solve(&rhs).ok_or_else(|| Error::Degenerate("CPD M-step system is singular".into()))?;
        t = &y + &g * &w;
        let t_sq: f64 = (0..m).map(|i| p1[i] * t.row(i).norm_squared()).sum();
        let cross: f64 = px.component_mul(&t).sum();
        sigma2 = ((pt1.dot(&x_sq) - 2.0 * cross + t_sq) / (3.0 * np)).max(floor);
    }
    if !converged {
        let es = e_step(target, &t, sigma2, params.w_outlier);
        objective.push(es.nll + penalty(&w));
        log::warn!("CPD stopped after {} iterations without converging", iterations);
    }

    let coefficients = (0..m).map(|i| Vec3::new(w[(i, 0)], w[(i, 1)], w[(i, 2)])).collect();
    Ok(DeformationField { control: template.to_vec(), coefficients, beta, converged, iterations, sigma2, objective })
}

/// Normalized kernel weights of `p` against the control points. Weights are
/// computed relative to the nearest control point so that they never all
/// underflow for finite input.
pub fn transfer_weights(p: &Point3, control: &[Point3], beta: f64) -> Result<Vec<f64>> {
    if control.is_empty() {
        return Err(Error::Empty("control points"));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidInput(format!("kernel width must be positive, got {beta}")));
    }
    let inv = 1.0 / (2.0 * beta * beta);
    let d2: Vec<f64> = control.iter().map(|y| (p - y).norm_squared()).collect();
    let dmin = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = d2.iter().map(|d| (-(d - dmin) * inv).exp()).collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::OutsideInfluence);
    }
    Ok(raw.into_iter().map(|r| r / total).collect())
}

/// Moves `p` by the kernel-weighted average of the control displacements.
/// `beta` overrides the field's kernel width.
pub fn transfer_landmark(p: &Point3, field: &DeformationField, beta: Option<f64>) -> Result<Point3> {
    let weights = transfer_weights(p, &field.control, beta.unwrap_or(field.beta))?;
    let delta = field.control_displacements().iter().zip(&weights).fold(Vec3::zeros(), |acc, (d, w)| acc + d * *w);
    Ok(p + delta)
}
