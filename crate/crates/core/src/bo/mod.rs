//! Bayesian optimization driver: Sobol' initialization, EI+ acquisition with
//! the exploration safeguard, and multi-seed orchestration.
//!
//! The surrogate works in unit-cube coordinates of the feasible region and
//! models the minimization target `y = -score`.

mod sobol;

pub use sobol::{sobol_sequence, Sobol, MAX_DIMS};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::analysis::{convergence_summary, ConvergenceSummary};
use crate::design::{DesignVector, FeasibleRegion};
use crate::error::{Error, Result};
use crate::evaluator::Evaluator;
use crate::gp::{fit_hyperparameters, inflate_kernel, GpModel, HyperBounds};
use crate::objective::{to_minimization, Objective, ObjectiveWeights};

/// Smallest refinement step in unit coordinates; also the duplicate nudge.
pub const GRID_STEP: f64 = 1e-3;
const DUPLICATE_TOL: f64 = 1e-9;
const SHIFT_SALT: u64 = 0xD1B5_4A32_D192_ED03;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoConfig {
    pub n_sobol: usize,
    pub sobol_skip: u32,
    pub sobol_leap: u32,
    pub n_iterations: usize,
    /// Defaults to 0.5 for one-segment and 0.6 for two-segment cases.
    pub t_sigma: Option<f64>,
    pub seeds: Vec<u64>,
    pub candidates: usize,
    pub refine_top: usize,
    pub inflation_factor: f64,
    pub max_inflations: usize,
    pub hyper_bounds: HyperBounds,
    /// XOR-shift the Sobol' design by a seed-derived word per dimension.
    pub shift_sobol_per_seed: bool,
    /// Raw design vectors evaluated before the Sobol' points.
    pub warm_start: Vec<Vec<f64>>,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            n_sobol: 25,
            sobol_skip: 1000,
            sobol_leap: 100,
            n_iterations: 50,
            t_sigma: None,
            seeds: (0..5).collect(),
            candidates: 5000,
            refine_top: 20,
            inflation_factor: 1.5,
            max_inflations: 5,
            hyper_bounds: HyperBounds::default(),
            shift_sobol_per_seed: true,
            warm_start: Vec::new(),
        }
    }
}

impl BoConfig {
    pub fn t_sigma_for(&self, segment_count: usize) -> f64 {
        self.t_sigma.unwrap_or(if segment_count == 2 { 0.6 } else { 0.5 })
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_sobol + self.warm_start.len() < 3 {
            problems.push("at least 3 initial designs are required to fit the surrogate".to_string());
        }
        if self.candidates == 0 {
            problems.push("candidates must be positive".to_string());
        }
        if self.seeds.is_empty() {
            problems.push("seeds must not be empty".to_string());
        }
        if let Some(t) = self.t_sigma {
            if !(t > 0.0) {
                problems.push(format!("t_sigma must be positive, got {t}"));
            }
        }
        if !(self.inflation_factor > 1.0) {
            problems.push(format!("inflation_factor must exceed 1, got {}", self.inflation_factor));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Schema { path: "bo".into(), problems })
        }
    }
}

/// Unshifted Sobol' design in the unit cube.
pub fn sobol_points(dims: usize, config: &BoConfig) -> Result<Vec<Vec<f64>>> {
    if dims != 5 && dims != 6 {
        return Err(Error::OutOfRange(format!("design dimension must be 5 or 6, got {dims}")));
    }
    sobol_sequence(dims, config.n_sobol, config.sobol_skip, config.sobol_leap, None)
}

fn seed_shift(seed: u64, dims: usize) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SHIFT_SALT);
    (0..dims).map(|_| rng.next_u32()).collect()
}

fn standard_normal() -> Normal {
    Normal::standard()
}

/// Expected improvement below `f_min` for a Gaussian with mean `mu` and
/// variance `s`.
pub fn ei_plus(mu: f64, s: f64, f_min: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::InvalidInput(format!("predictive variance must be positive, got {s}")));
    }
    let sd = s.sqrt();
    let gain = f_min - mu;
    let z = gain / sd;
    let n = standard_normal();
    Ok((gain * n.cdf(z) + sd * n.pdf(z)).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Safeguard {
    Accept,
    Inflate,
}

/// Requests inflation when the latent posterior std at `x` falls below
/// `t_sigma` times the fitted noise std.
pub fn safeguard_check(model: &GpModel, x: &[f64], t_sigma: f64) -> Result<Safeguard> {
    let sigma_f = model.posterior(x)?.var_latent.sqrt();
    Ok(if sigma_f < t_sigma * model.noise_var().sqrt() { Safeguard::Inflate } else { Safeguard::Accept })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    /// Unit-cube coordinates.
    pub unit: Vec<f64>,
    pub phi: DesignVector,
    pub ei: f64,
}

fn acquisition(model: &GpModel, x: &[f64], f_min: f64) -> f64 {
    match model.posterior(x) {
        Ok(p) if p.var_predictive > 0.0 => ei_plus(p.mean, p.var_predictive, f_min).unwrap_or(0.0),
        _ => 0.0,
    }
}

fn refine(model: &GpModel, start: Vec<f64>, value: f64, f_min: f64) -> (Vec<f64>, f64) {
    let (mut x, mut best) = (start, value);
    let mut step = 0.1;
    let mut sweeps = 0;
    while step >= GRID_STEP && sweeps < 100 {
        sweeps += 1;
        let mut improved = false;
        for c in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut trial = x.clone();
                trial[c] = (trial[c] + dir * step).clamp(0.0, 1.0);
                if trial[c] == x[c] {
                    continue;
                }
                let v = acquisition(model, &trial, f_min);
                if v > best {
                    x = trial;
                    best = v;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, best)
}

fn is_duplicate(x: &[f64], seen: &[Vec<f64>]) -> bool {
    seen.iter().any(|s| s.iter().zip(x).all(|(a, b)| (a - b).abs() <= DUPLICATE_TOL))
}

/// Moves `x` by one grid step along successive coordinates until it no
/// longer coincides with an evaluated point.
fn nudge_duplicates(mut x: Vec<f64>, seen: &[Vec<f64>]) -> Vec<f64> {
    let mut c = 0;
    while is_duplicate(&x, seen) {
        let k = c % x.len();
        x[k] = if x[k] + GRID_STEP <= 1.0 { x[k] + GRID_STEP } else { x[k] - GRID_STEP };
        c += 1;
    }
    x
}

/// Maximizes EI+ over `config.candidates` uniform candidates followed by
/// coordinate refinement of the best `config.refine_top`.
pub fn propose_next(model: &GpModel, region: &FeasibleRegion, config: &BoConfig, rng: &mut impl Rng) -> Result<Proposal> {
    let dims = region.dims();
    if model.kernel().dims() != dims {
        return Err(Error::DimensionMismatch { expected: dims, got: model.kernel().dims() });
    }
    let f_min = model.outputs().iter().copied().fold(f64::INFINITY, f64::min);
    let f_min = if f_min.is_finite() { f_min } else { model.prior_mean() };

    let mut scored: Vec<(Vec<f64>, f64)> = (0..config.candidates)
        .map(|_| {
            let x: Vec<f64> = (0..dims).map(|_| rng.random::<f64>()).collect();
            let v = acquisition(model, &x, f_min);
            (x, v)
        })
        .collect();
    // Stable sort keeps the draw order among ties.
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));

    let mut best: Option<(Vec<f64>, f64)> = None;
    for (x, v) in scored.into_iter().take(config.refine_top.max(1)) {
        let (x, v) = refine(model, x, v, f_min);
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((x, v));
        }
    }
    let (x, _) = best.expect("candidate set is non-empty");
    let x = nudge_duplicates(x, model.inputs());
    let ei = acquisition(model, &x, f_min);
    Ok(Proposal { phi: region.from_unit(&x)?, unit: x, ei })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub proposal: Proposal,
    /// Latent posterior std at the accepted point under the final kernel.
    pub sigma_f: f64,
    pub inflations: usize,
    /// The safeguard still fired after the last allowed inflation.
    pub capped: bool,
}

/// EI+ proposal with up to `max_inflations` safeguard rounds.
pub fn select_next(model: &GpModel, region: &FeasibleRegion, config: &BoConfig, t_sigma: f64, rng: &mut impl Rng) -> Result<Selection> {
    let mut current = model.clone();
    let mut inflations = 0;
    loop {
        let proposal = propose_next(&current, region, config, rng)?;
        let decision = safeguard_check(&current, &proposal.unit, t_sigma)?;
        let sigma_f = current.posterior(&proposal.unit)?.var_latent.sqrt();
        if decision == Safeguard::Accept || inflations >= config.max_inflations {
            return Ok(Selection { proposal, sigma_f, inflations, capped: decision == Safeguard::Inflate });
        }
        current = current.with_kernel(inflate_kernel(current.kernel(), config.inflation_factor))?;
        inflations += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Warm,
    Sobol,
    Acquisition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub sigma_f: f64,
    pub lengthscales: Vec<f64>,
    pub noise_var: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub index: usize,
    pub phase: Phase,
    pub phi: Vec<f64>,
    pub normalized: Vec<f64>,
    /// Minimization target `-score`.
    pub y: f64,
    pub best_so_far: f64,
    pub averages: Vec<f64>,
    pub fit: Option<FitSummary>,
    pub ei: Option<f64>,
    pub sigma_f: Option<f64>,
    pub inflations: usize,
    pub safeguard: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub seed: u64,
    pub records: Vec<EvalRecord>,
    pub error: Option<String>,
}

impl OptimizationTrace {
    pub fn best_so_far(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.best_so_far).collect()
    }

    /// Earliest record attaining the minimum `y`.
    pub fn best(&self) -> Option<&EvalRecord> {
        self.records.iter().fold(None, |acc: Option<&EvalRecord>, r| match acc {
            Some(b) if b.y <= r.y => Some(b),
            _ => Some(r),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub objective: Objective,
    pub traces: Vec<OptimizationTrace>,
    /// Statistics of best-so-far `y` per evaluation index across seeds.
    pub summary: ConvergenceSummary,
}

struct Observation {
    unit: Vec<f64>,
    y: f64,
    phi: DesignVector,
    averages: Vec<f64>,
}

fn observe(
    evaluator: &dyn Evaluator,
    objective: Objective,
    weights: &ObjectiveWeights,
    phi: DesignVector,
) -> Result<Observation> {
    let region = evaluator.region();
    let result = evaluator.evaluate(&phi)?;
    let y = to_minimization(result.score(objective, weights)?);
    if !y.is_finite() {
        return Err(Error::Evaluator(format!("non-finite objective at {:?}", phi.to_vec())));
    }
    Ok(Observation { unit: region.to_unit(&phi)?, y, averages: result.averages()?, phi })
}

fn seed_mix(seed: u64, k: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ k.wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// One optimization run. Evaluator failures end the run and are recorded in
/// [`OptimizationTrace::error`].
pub fn run_seed(
    evaluator: &dyn Evaluator,
    objective: Objective,
    weights: &ObjectiveWeights,
    config: &BoConfig,
    seed: u64,
) -> OptimizationTrace {
    let mut trace = OptimizationTrace { seed, records: Vec::new(), error: None };
    if let Err(e) = run_seed_inner(evaluator, objective, weights, config, seed, &mut trace) {
        trace.error = Some(e.to_string());
    }
    trace
}

fn push_record(trace: &mut OptimizationTrace, region: &FeasibleRegion, phase: Phase, obs: &Observation) -> Result<()> {
    let best = trace.records.last().map_or(obs.y, |r| r.best_so_far.min(obs.y));
    trace.records.push(EvalRecord {
        index: trace.records.len(),
        phase,
        phi: obs.phi.to_vec(),
        normalized: region.normalize(&obs.phi)?,
        y: obs.y,
        best_so_far: best,
        averages: obs.averages.clone(),
        fit: None,
        ei: None,
        sigma_f: None,
        inflations: 0,
        safeguard: false,
    });
    Ok(())
}

fn run_seed_inner(
    evaluator: &dyn Evaluator,
    objective: Objective,
    weights: &ObjectiveWeights,
    config: &BoConfig,
    seed: u64,
    trace: &mut OptimizationTrace,
) -> Result<()> {
    config.validate()?;
    let region = *evaluator.region();
    let dims = region.dims();
    let t_sigma = config.t_sigma_for(region.segment_count());

    let mut initial: Vec<(Phase, DesignVector)> = Vec::new();
    for w in &config.warm_start {
        let phi = DesignVector::from_slice(w)?;
        region.ensure_contains(&phi)?;
        initial.push((Phase::Warm, phi));
    }
    let shift = config.shift_sobol_per_seed.then(|| seed_shift(seed, dims));
    for u in sobol_sequence(dims, config.n_sobol, config.sobol_skip, config.sobol_leap, shift.as_deref())? {
        initial.push((Phase::Sobol, region.from_unit(&u)?));
    }
    let observed: Vec<Result<Observation>> =
        initial.par_iter().map(|(_, phi)| observe(evaluator, objective, weights, *phi)).collect();

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for ((phase, _), obs) in initial.iter().zip(observed) {
        let obs = obs?;
        push_record(trace, &region, *phase, &obs)?;
        xs.push(obs.unit);
        ys.push(obs.y);
    }

    let ranges = vec![1.0; dims];
    let mut rng = ChaCha8Rng::seed_from_u64(seed_mix(seed, 0));
    for it in 0..config.n_iterations {
        let fit = fit_hyperparameters(&xs, &ys, &ranges, &config.hyper_bounds, seed_mix(seed, it as u64 + 1))?;
        let model = GpModel::new(fit.kernel.clone(), fit.noise_var, xs.clone(), ys.clone())?;
        let sel = select_next(&model, &region, config, t_sigma, &mut rng)?;
        let obs = observe(evaluator, objective, weights, sel.proposal.phi)?;
        push_record(trace, &region, Phase::Acquisition, &obs)?;
        let rec = trace.records.last_mut().expect("record just pushed");
        rec.fit = Some(FitSummary {
            sigma_f: fit.kernel.sigma_f,
            lengthscales: fit.kernel.lengthscales,
            noise_var: fit.noise_var,
            log_likelihood: fit.log_likelihood,
        });
        rec.ei = Some(sel.proposal.ei);
        rec.sigma_f = Some(sel.sigma_f);
        rec.inflations = sel.inflations;
        rec.safeguard = sel.inflations > 0;
        if sel.capped {
            log::warn!("seed {seed}, iteration {}: safeguard still active after {} inflations", it + 1, sel.inflations);
        }
        xs.push(obs.unit);
        ys.push(obs.y);
    }
    Ok(())
}

/// Runs every configured seed (concurrently) and aggregates best-so-far
/// statistics over the seeds that completed without error.
pub fn run(evaluator: &dyn Evaluator, objective: Objective, weights: &ObjectiveWeights, config: &BoConfig) -> Result<RunResult> {
    config.validate()?;
    let traces: Vec<OptimizationTrace> =
        config.seeds.par_iter().map(|&s| run_seed(evaluator, objective, weights, config, s)).collect();
    let curves: Vec<Vec<f64>> = traces.iter().filter(|t| t.error.is_none()).map(|t| t.best_so_far()).collect();
    let summary = if curves.is_empty() {
        ConvergenceSummary::default()
    } else {
        convergence_summary(&curves)?
    };
    Ok(RunResult { objective, traces, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::KernelParams;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn ei_examples() {
        assert!((ei_plus(0.0, 1.0, 0.0).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-12);
        assert!(ei_plus(1.0, 1e-20, 0.0).unwrap() < 1e-300);
        assert!(ei_plus(0.0, 0.0, 0.0).is_err());
        assert!(ei_plus(0.0, -1.0, 0.0).is_err());
        // Deep improvement tends to the gap itself.
        assert!((ei_plus(-5.0, 1e-6, 0.0).unwrap() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn ei_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let mu = rng.random_range(-1.0..1.0);
            let s: f64 = rng.random_range(0.01..2.0);
            let f_min = rng.random_range(-1.0..1.0);
            let n = 200_000;
            let mc: f64 = (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (f_min - (mu + s.sqrt() * z)).max(0.0)
                })
                .sum::<f64>()
                / n as f64;
            assert!((ei_plus(mu, s, f_min).unwrap() - mc).abs() < 1e-2);
        }
    }

    fn model_1d(xs: &[f64], ys: &[f64]) -> GpModel {
        GpModel::new(KernelParams::new(1.0, vec![0.2]).unwrap(), 1e-6, xs.iter().map(|x| vec![*x]).collect(), ys.to_vec()).unwrap()
    }

    #[test]
    fn sobol_points_reject_other_dimensions() {
        assert!(sobol_points(4, &BoConfig::default()).is_err());
        assert_eq!(sobol_points(6, &BoConfig::default()).unwrap().len(), 25);
    }

    #[test]
    fn maximizer_matches_dense_grid_in_one_dimension() {
        let model = model_1d(&[0.1, 0.35, 0.5, 0.8, 0.95], &[0.3, -0.2, 0.1, 0.4, 0.0]);
        let f_min = -0.2;
        let n = 10_000;
        let (grid_x, grid_v) = (0..n)
            .map(|i| {
                let x = i as f64 / (n - 1) as f64;
                (x, acquisition(&model, &[x], f_min))
            })
            .fold((0.0, f64::NEG_INFINITY), |acc, (x, v)| if v > acc.1 { (x, v) } else { acc });
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = maximize_unit_1d(&model, &mut rng);
        assert!((x - grid_x).abs() <= 1.0 / (n - 1) as f64 + 1e-3, "{x} vs {grid_x}");
        assert!(acquisition(&model, &[x], f_min) >= grid_v - 1e-9);
    }

    fn maximize_unit_1d(model: &GpModel, rng: &mut ChaCha8Rng) -> f64 {
        // A degenerate 1-D search through the same candidate/refine path.
        let f_min = model.outputs().iter().copied().fold(f64::INFINITY, f64::min);
        let mut scored: Vec<(Vec<f64>, f64)> = (0..5000)
            .map(|_| {
                let x = vec![rng.random::<f64>()];
                let v = acquisition(model, &x, f_min);
                (x, v)
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        scored
            .into_iter()
            .take(20)
            .map(|(x, v)| refine(model, x, v, f_min))
            .fold((vec![0.0], f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc })
            .0[0]
    }

    fn region() -> FeasibleRegion {
        FeasibleRegion::new(25.0, 25.0, 20.0, 20.0, 3.5, None).unwrap()
    }

    fn model_5d(n: usize, seed: u64) -> GpModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..5).map(|_| rng.random::<f64>()).collect()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.iter().map(|v| (v - 0.3).powi(2)).sum()).collect();
        GpModel::new(KernelParams::new(1.0, vec![0.3; 5]).unwrap(), 1e-4, xs, ys).unwrap()
    }

    #[test]
    fn proposals_are_feasible_and_deterministic() {
        let config = BoConfig { candidates: 500, refine_top: 3, ..Default::default() };
        let model = model_5d(10, 3);
        let a = propose_next(&model, &region(), &config, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = propose_next(&model, &region(), &config, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert!(region().contains(&a.phi).unwrap());
        let single = GpModel::new(KernelParams::new(1.0, vec![0.3; 5]).unwrap(), 1e-4, vec![vec![0.5; 5]], vec![0.0]).unwrap();
        let p = propose_next(&single, &region(), &config, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(region().contains(&p.phi).unwrap());
    }

    #[test]
    fn duplicates_are_nudged() {
        let seen = vec![vec![0.5; 5], vec![1.0, 0.2, 0.2, 0.2, 0.2]];
        let x = nudge_duplicates(vec![0.5; 5], &seen);
        assert!(!is_duplicate(&x, &seen));
        assert!((x[0] - 0.5 - GRID_STEP).abs() < 1e-15);
        let y = nudge_duplicates(vec![1.0, 0.2, 0.2, 0.2, 0.2], &seen);
        assert!((y[0] - (1.0 - GRID_STEP)).abs() < 1e-15);
    }

    #[test]
    fn safeguard_triggers_at_replicated_data() {
        // Ten replicates pull the latent std at their location to about
        // noise_std/sqrt(10), below half the noise std.
        let base = model_5d(10, 4);
        let p = vec![0.4; 5];
        let mut xs = base.inputs().to_vec();
        let mut ys = base.outputs().to_vec();
        for _ in 0..10 {
            xs.push(p.clone());
            ys.push(0.1);
        }
        let model = GpModel::new(KernelParams::new(1.0, vec![0.3; 5]).unwrap(), 1e-2, xs, ys).unwrap();
        assert_eq!(safeguard_check(&model, &p, 0.5).unwrap(), Safeguard::Inflate);
        assert_eq!(safeguard_check(&model, &[0.999; 5], 0.5).unwrap(), Safeguard::Accept);
        let far = [0.999; 5];
        let before = model.posterior(&far).unwrap().var_latent;
        let wide = model.with_kernel(inflate_kernel(model.kernel(), 1.5)).unwrap();
        assert!(wide.posterior(&far).unwrap().var_latent > before);
    }

    #[test]
    fn safeguard_cap_accepts_with_flag() {
        let model = model_5d(15, 2);
        let config = BoConfig { candidates: 200, refine_top: 2, ..Default::default() };
        let sel = select_next(&model, &region(), &config, 1e9, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(sel.inflations, 5);
        assert!(sel.capped);
        let sel = select_next(&model, &region(), &config, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(sel.inflations, 0);
        assert!(!sel.capped);
    }

    #[test]
    fn incumbent_with_tiny_variance_has_no_improvement() {
        let model = GpModel::new(KernelParams::new(1.0, vec![0.3]).unwrap(), 1e-12, vec![vec![0.2], vec![0.7]], vec![0.0, 1.0]).unwrap();
        let p = model.posterior(&[0.2]).unwrap();
        assert!(ei_plus(p.mean, p.var_predictive, 0.0).unwrap() < 1e-5);
    }
}
