//! Gaussian-process surrogate with an ARD Matérn 5/2 kernel.
//!
//! Inputs are expected in unit-cube coordinates. The prior mean is the
//! constant data mean.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub sigma_f: f64,
    pub lengthscales: Vec<f64>,
}

impl KernelParams {
    pub fn new(sigma_f: f64, lengthscales: Vec<f64>) -> Result<Self> {
        let p = Self { sigma_f, lengthscales };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_f > 0.0 && self.sigma_f.is_finite()) || self.lengthscales.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidInput("kernel parameters must be positive and finite".into()));
        }
        if self.lengthscales.is_empty() {
            return Err(Error::Empty("lengthscale vector"));
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.lengthscales.len()
    }

    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(y).zip(&self.lengthscales).map(|((a, b), l)| ((a - b) / l).powi(2)).sum();
        let r = r2.sqrt();
        self.sigma_f * self.sigma_f * (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * (-SQRT5 * r).exp()
    }
}

pub fn kernel_eval(x: &[f64], y: &[f64], params: &KernelParams) -> Result<f64> {
    for v in [x, y] {
        if v.len() != params.dims() {
            return Err(Error::DimensionMismatch { expected: params.dims(), got: v.len() });
        }
    }
    Ok(params.eval_unchecked(x, y))
}

/// Multiplies the signal scale and every lengthscale by `factor`.
pub fn inflate_kernel(params: &KernelParams, factor: f64) -> KernelParams {
    KernelParams {
        sigma_f: params.sigma_f * factor,
        lengthscales: params.lengthscales.iter().map(|l| l * factor).collect(),
    }
}

pub fn gram_matrix(xs: &[Vec<f64>], params: &KernelParams) -> DMatrix<f64> {
    let n = xs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = params.eval_unchecked(&xs[i], &xs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky of `K + (σ² + j)I` with `j` escalated from `1e-10·tr(K)/N` by
/// factors of 10 up to `1e-4·tr(K)/N`.
fn jittered_cholesky(k: &DMatrix<f64>, noise_var: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    let scale = (k.trace() / n as f64).max(f64::MIN_POSITIVE);
    let mut rel = JITTER_START;
    loop {
        let jitter = rel * scale;
        let mut a = k.clone();
        for i in 0..n {
            a[(i, i)] += noise_var + jitter;
        }
        if let Some(c) = Cholesky::new(a) {
            return Ok((c, jitter));
        }
        if rel >= JITTER_MAX {
            return Err(Error::NotPositiveDefinite { jitter });
        }
        rel *= 10.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    /// Latent variance σ_F².
    pub var_latent: f64,
    /// Predictive variance σ_Q² = σ_F² + σ².
    pub var_predictive: f64,
}

#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: KernelParams,
    noise_var: f64,
    mean: f64,
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpModel {
    /// Conditions on `(xs, ys)` with the prior mean set to the data mean.
    pub fn new(kernel: KernelParams, noise_var: f64, xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Result<Self> {
        let mean = if ys.is_empty() { 0.0 } else { ys.iter().sum::<f64>() / ys.len() as f64 };
        Self::with_mean(kernel, noise_var, mean, xs, ys)
    }

    pub fn with_mean(kernel: KernelParams, noise_var: f64, mean: f64, xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Result<Self> {
        kernel.validate()?;
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::InvalidInput(format!("noise variance must be positive, got {noise_var}")));
        }
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), got: ys.len() });
        }
        if let Some(bad) = xs.iter().find(|x| x.len() != kernel.dims()) {
            return Err(Error::DimensionMismatch { expected: kernel.dims(), got: bad.len() });
        }
        if xs.is_empty() {
            return Ok(Self { kernel, noise_var, mean, xs, ys, chol: None, alpha: DVector::zeros(0), jitter: 0.0 });
        }
        let (chol, jitter) = jittered_cholesky(&gram_matrix(&xs, &kernel), noise_var)?;
        let resid = DVector::from_iterator(ys.len(), ys.iter().map(|y| y - mean));
        let alpha = chol.solve(&resid);
        Ok(Self { kernel, noise_var, mean, xs, ys, chol: Some(chol), alpha, jitter })
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn prior_mean(&self) -> f64 {
        self.mean
    }

    /// Diagonal jitter actually added on top of the noise variance.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.xs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Same data, different kernel.
    pub fn with_kernel(&self, kernel: KernelParams) -> Result<Self> {
        Self::with_mean(kernel, self.noise_var, self.mean, self.xs.clone(), self.ys.clone())
    }

    pub fn posterior(&self, x: &[f64]) -> Result<Posterior> {
        if x.len() != self.kernel.dims() {
            return Err(Error::DimensionMismatch { expected: self.kernel.dims(), got: x.len() });
        }
        let prior = self.kernel.sigma_f * self.kernel.sigma_f;
        let Some(chol) = &self.chol else {
            return Ok(Posterior { mean: self.mean, var_latent: prior, var_predictive: prior + self.noise_var });
        };
        let kstar = DVector::from_iterator(self.xs.len(), self.xs.iter().map(|xi| self.kernel.eval_unchecked(x, xi)));
        let mean = self.mean + kstar.dot(&self.alpha);
        let v = chol.l().solve_lower_triangular(&kstar).expect("Cholesky factor has a positive diagonal");
        let var_latent = (prior - v.norm_squared()).max(0.0);
        Ok(Posterior { mean, var_latent, var_predictive: var_latent + self.noise_var })
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let Some(chol) = &self.chol else { return 0.0 };
        let resid = DVector::from_iterator(self.ys.len(), self.ys.iter().map(|y| y - self.mean));
        let n = self.ys.len() as f64;
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * resid.dot(&self.alpha) - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Search box for hyperparameters, relative to the data scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperBounds {
    /// Multiples of the per-dimension input range.
    pub lengthscale: [f64; 2],
    /// Multiples of std(y).
    pub sigma_f: [f64; 2],
    /// Multiples of var(y).
    pub noise_var: [f64; 2],
    pub starts: usize,
}

impl Default for HyperBounds {
    fn default() -> Self {
        Self { lengthscale: [1e-2, 1e2], sigma_f: [1e-3, 1e1], noise_var: [1e-8, 1.0], starts: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kernel: KernelParams,
    pub noise_var: f64,
    pub log_likelihood: f64,
}

/// Maximizes the log marginal likelihood by coordinate search in log space
/// from `bounds.starts` starting points. The first start is the box centre
/// in log space; the others are drawn from `ChaCha8Rng(seed)`.
///
/// `ranges` gives the input range per dimension (1 for unit-cube inputs).
/// When `y` has zero spread the data scale falls back to 1.
pub fn fit_hyperparameters(xs: &[Vec<f64>], ys: &[f64], ranges: &[f64], bounds: &HyperBounds, seed: u64) -> Result<FitResult> {
    if xs.len() < 3 {
        return Err(Error::InvalidInput(format!("hyperparameter fitting needs at least 3 observations, got {}", xs.len())));
    }
    let d = ranges.len();
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let (std, var) = if var.sqrt() > 1e-12 * mean.abs() && var > 0.0 { (var.sqrt(), var) } else { (1.0, 1.0) };

    // Log-space box: [ln σ_f, ln ℓ_1..d, ln σ²].
    let mut lo = Vec::with_capacity(d + 2);
    let mut hi = Vec::with_capacity(d + 2);
    lo.push((bounds.sigma_f[0] * std).ln());
    hi.push((bounds.sigma_f[1] * std).ln());
    for r in ranges {
        lo.push((bounds.lengthscale[0] * r).ln());
        hi.push((bounds.lengthscale[1] * r).ln());
    }
    lo.push((bounds.noise_var[0] * var).ln());
    hi.push((bounds.noise_var[1] * var).ln());
    if lo.iter().zip(&hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b)) {
        return Err(Error::InvalidInput("invalid hyperparameter bounds".into()));
    }

    let objective = |theta: &[f64]| -> f64 {
        let kernel = KernelParams { sigma_f: theta[0].exp(), lengthscales: theta[1..=d].iter().map(|t| t.exp()).collect() };
        match GpModel::with_mean(kernel, theta[d + 1].exp(), mean, xs.to_vec(), ys.to_vec()) {
            Ok(m) => m.log_marginal_likelihood(),
            Err(_) => f64::NEG_INFINITY,
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in 0..bounds.starts.max(1) {
        let theta0: Vec<f64> = if start == 0 {
            lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect()
        } else {
            lo.iter().zip(&hi).map(|(a, b)| rng.random_range(*a..=*b)).collect()
        };
        let (theta, value) = coordinate_search(theta0, &lo, &hi, &objective);
        if best.as_ref().is_none_or(|(_, v)| value > *v) {
            best = Some((theta, value));
        }
    }
    let (theta, value) = best.expect("at least one start");
    if !value.is_finite() {
        return Err(Error::NotPositiveDefinite { jitter: JITTER_MAX });
    }
    Ok(FitResult {
        kernel: KernelParams { sigma_f: theta[0].exp(), lengthscales: theta[1..=d].iter().map(|t| t.exp()).collect() },
        noise_var: theta[d + 1].exp(),
        log_likelihood: value,
    })
}

fn coordinate_search(mut theta: Vec<f64>, lo: &[f64], hi: &[f64], f: &impl Fn(&[f64]) -> f64) -> (Vec<f64>, f64) {
    let mut value = f(&theta);
    let mut step = 1.0;
    let mut sweeps = 0;
    while step > 1e-2 && sweeps < 200 {
        sweeps += 1;
        let mut improved = false;
        for c in 0..theta.len() {
            for dir in [1.0, -1.0] {
                let mut trial = theta.clone();
                trial[c] = (trial[c] + dir * step).clamp(lo[c], hi[c]);
                if trial[c] == theta[c] {
                    continue;
                }
                let v = f(&trial);
                if v > value {
                    theta = trial;
                    value = v;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (theta, value)
}
