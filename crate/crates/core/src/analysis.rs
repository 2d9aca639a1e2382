//! Sensitivity harness, longitudinal validation metrics and convergence
//! statistics.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bone::CORTICAL_HU_THRESHOLD;
use crate::design::{DesignVector, FeasibleRegion};
use crate::error::{Error, Result};
use crate::evaluator::{Evaluator, InterfaceStimuli, SyntheticEvaluator, SyntheticModelConfig};
use crate::geometry::Point3;
use crate::objective::{Objective, ObjectiveWeights};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: [usize; 3],
    /// mm per voxel along x, y, z.
    pub spacing: [f64; 3],
    /// Center of voxel (0, 0, 0).
    pub origin: [f64; 3],
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Flat index with x fastest.
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Point3 {
        Point3::new(
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.spacing.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidInput(format!("voxel spacing must be positive, got {:?}", self.spacing)));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidInput("voxel origin must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelMask {
    pub grid: GridSpec,
    pub values: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskHeader {
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    /// Raw file with one 0/1 byte per voxel, x fastest; relative to the header.
    data: String,
}

impl VoxelMask {
    pub fn new(grid: GridSpec, values: Vec<bool>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Result<Self> {
        Self::new(grid, vec![false; grid.len()])
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|v| **v).count()
    }

    /// Reads a JSON header and the raw byte file it names.
    pub fn read(header_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
        let header: MaskHeader = serde_json::from_str(&text)?;
        let data_path = header_path.parent().unwrap_or(Path::new("")).join(&header.data);
        let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
        if let Some(b) = bytes.iter().find(|b| **b > 1) {
            return Err(Error::Parse { path: data_path.display().to_string(), line: 0, msg: format!("mask byte {b} is not 0 or 1") });
        }
        let grid = GridSpec { dims: header.dims, spacing: header.spacing, origin: header.origin };
        Self::new(grid, bytes.into_iter().map(|b| b == 1).collect())
    }

    /// Writes `header_path` and a sibling `.raw` file; returns the raw path.
    pub fn write(&self, header_path: &Path) -> Result<PathBuf> {
        let data_path = header_path.with_extension("raw");
        let data = data_path.file_name().and_then(|n| n.to_str()).ok_or(Error::InvalidInput("mask path has no file name".into()))?;
        let header = MaskHeader { dims: self.grid.dims, spacing: self.grid.spacing, origin: self.grid.origin, data: data.to_string() };
        let bytes: Vec<u8> = self.values.iter().map(|v| u8::from(*v)).collect();
        fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))?;
        fs::write(header_path, serde_json::to_string_pretty(&header)?).map_err(|e| Error::io(header_path, e))?;
        Ok(data_path)
    }
}

/// Dice coefficient `2|A∩B| / (|A| + |B|)`; 1 when both masks are empty.
pub fn dice(a: &VoxelMask, b: &VoxelMask) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::InvalidInput("masks are defined on different grids".into()));
    }
    let both = a.values.iter().zip(&b.values).filter(|(x, y)| **x && **y).count();
    let total = a.count() + b.count();
    if total == 0 {
        log::warn!("dice of two empty masks taken as 1");
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / total as f64)
}

/// Ranks elements by the number of steps above `threshold`, then by mean
/// stimulus, then by index, and returns the top `⌈cort_pct·M⌉`.
pub fn select_apposition_elements(stimuli: &InterfaceStimuli, threshold: f64, cort_pct: f64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&cort_pct) {
        return Err(Error::OutOfRange(format!("cort% must lie in [0, 1], got {cort_pct}")));
    }
    let m = stimuli.stimulus.len();
    let k = ((cort_pct * m as f64).ceil() as usize).min(m);
    let mut keyed: Vec<(usize, f64, usize)> = stimuli
        .stimulus
        .iter()
        .enumerate()
        .map(|(e, s)| {
            let count = s.iter().filter(|v| **v > threshold).count();
            let mean = if s.is_empty() { 0.0 } else { s.iter().sum::<f64>() / s.len() as f64 };
            (count, mean, e)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
    Ok(keyed.into_iter().take(k).map(|(_, _, e)| e).collect())
}

/// Sum of unnormalized isotropic Gaussians `exp(−r²/2σ²)` sampled at voxel
/// centers, truncated at 5σ.
pub fn splat_field(points: &[Point3], grid: &GridSpec, sigma: f64) -> Result<Vec<f64>> {
    grid.validate()?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!("splat sigma must be positive, got {sigma}")));
    }
    let mut field = vec![0.0; grid.len()];
    let reach = 5.0 * sigma;
    let inv = 1.0 / (2.0 * sigma * sigma);
    for p in points {
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let mut empty = false;
        for a in 0..3 {
            let rel = (p[a] - grid.origin[a]) / grid.spacing[a];
            let r = reach / grid.spacing[a];
            let l = (rel - r).ceil().max(0.0);
            let h = (rel + r).floor().min(grid.dims[a] as f64 - 1.0);
            if h < l {
                empty = true;
                break;
            }
            lo[a] = l as usize;
            hi[a] = h as usize;
        }
        if empty {
            continue;
        }
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let d2 = (grid.center(i, j, k) - p).norm_squared();
                    field[grid.index(i, j, k)] += (-d2 * inv).exp();
                }
            }
        }
    }
    Ok(field)
}

/// Thresholds [`splat_field`] (strictly above `threshold`) into a mask.
pub fn splat_to_grid(points: &[Point3], grid: &GridSpec, sigma: f64, threshold: f64) -> Result<VoxelMask> {
    let field = splat_field(points, grid, sigma)?;
    VoxelMask::new(*grid, field.into_iter().map(|v| v > threshold).collect())
}

/// Fraction of voxels strictly above `threshold` HU.
pub fn cortical_fraction(hu: &[f64], threshold: f64) -> Result<f64> {
    if hu.is_empty() {
        return Err(Error::Empty("HU grid"));
    }
    Ok(hu.iter().filter(|v| **v > threshold).count() as f64 / hu.len() as f64)
}

pub fn cortical_fraction_default(hu: &[f64]) -> Result<f64> {
    cortical_fraction(hu, CORTICAL_HU_THRESHOLD)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityParam {
    RhoCortical,
    RhoCancellous,
    ECortical,
    ECancellous,
    ContactE,
    ContactNu,
    ContactThickness,
    S0,
    FiberLengthScale,
    ForceScale,
    YieldScale,
}

impl SensitivityParam {
    pub const ALL: [SensitivityParam; 11] = [
        Self::RhoCortical,
        Self::RhoCancellous,
        Self::ECortical,
        Self::ECancellous,
        Self::ContactE,
        Self::ContactNu,
        Self::ContactThickness,
        Self::S0,
        Self::FiberLengthScale,
        Self::ForceScale,
        Self::YieldScale,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::RhoCortical => "rho_cortical",
            Self::RhoCancellous => "rho_cancellous",
            Self::ECortical => "e_cortical",
            Self::ECancellous => "e_cancellous",
            Self::ContactE => "contact_e",
            Self::ContactNu => "contact_nu",
            Self::ContactThickness => "contact_thickness",
            Self::S0 => "s0",
            Self::FiberLengthScale => "fiber_length_scale",
            Self::ForceScale => "force_scale",
            Self::YieldScale => "yield_scale",
        }
    }

    /// Config field the parameter scales.
    pub fn config_path(self) -> &'static str {
        match self {
            Self::RhoCortical => "materials.cortical.density",
            Self::RhoCancellous => "materials.cancellous.density",
            Self::ECortical => "materials.cortical.youngs_gpa",
            Self::ECancellous => "materials.cancellous.youngs_gpa",
            Self::ContactE => "contact.youngs_kpa",
            Self::ContactNu => "contact.poisson",
            Self::ContactThickness => "contact.thickness_mm",
            Self::S0 => "stimulus.s0",
            Self::FiberLengthScale => "fiber_length_scale",
            Self::ForceScale => "force_scale",
            Self::YieldScale => "materials.*.yield_mpa",
        }
    }

    /// Copy of `config` with this parameter multiplied by `factor`.
    pub fn apply(self, config: &SyntheticModelConfig, factor: f64) -> SyntheticModelConfig {
        let mut c = config.clone();
        let mut m = c.resolved_materials();
        match self {
            Self::RhoCortical => m.cortical.density *= factor,
            Self::RhoCancellous => m.cancellous.density *= factor,
            Self::ECortical => m.cortical.youngs_gpa *= factor,
            Self::ECancellous => m.cancellous.youngs_gpa *= factor,
            Self::ContactE => c.contact.youngs_kpa *= factor,
            Self::ContactNu => c.contact.poisson *= factor,
            Self::ContactThickness => c.contact.thickness_mm *= factor,
            Self::S0 => c.stimulus.s0 *= factor,
            Self::FiberLengthScale => c.fiber_length_scale *= factor,
            Self::ForceScale => c.force_scale *= factor,
            Self::YieldScale => {
                m.cortical.yield_mpa *= factor;
                m.cancellous.yield_mpa *= factor;
            }
        }
        c.materials = Some(m);
        c
    }
}

impl std::str::FromStr for SensitivityParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Unknown { kind: "sensitivity parameter", name: s.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivitySpec {
    pub parameters: Vec<SensitivityParam>,
    /// Relative perturbation; cells use factors `1 − p` and `1 + p`.
    pub perturbation: f64,
    pub repeats: usize,
}

impl Default for SensitivitySpec {
    fn default() -> Self {
        Self { parameters: SensitivityParam::ALL.to_vec(), perturbation: 0.1, repeats: 5 }
    }
}

impl SensitivitySpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.parameters.is_empty() {
            problems.push("parameters must not be empty".to_string());
        }
        if !(0.0..1.0).contains(&self.perturbation) {
            problems.push(format!("perturbation must lie in [0, 1), got {}", self.perturbation));
        }
        if self.repeats == 0 {
            problems.push("repeats must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Schema { path: "sensitivity".into(), problems })
        }
    }

    pub fn cell_count(&self) -> usize {
        self.parameters.len() * 2 * self.repeats
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub parameter: SensitivityParam,
    pub factor: f64,
    pub baseline: f64,
    /// Mean F_opt over the successful repeats; `None` if all failed.
    pub mean: Option<f64>,
    /// `(mean − baseline)/baseline`; `None` when undefined.
    pub relative_change: Option<f64>,
    pub evaluations: usize,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTable {
    pub baseline: f64,
    pub rows: Vec<SensitivityRow>,
}

impl SensitivityTable {
    pub fn evaluations(&self) -> usize {
        self.rows.iter().map(|r| r.evaluations).sum()
    }
}

fn f_opt_at(region: FeasibleRegion, config: SyntheticModelConfig, phi: &DesignVector, w: &ObjectiveWeights) -> Result<f64> {
    let ev = SyntheticEvaluator::new(region, config)?;
    ev.evaluate(phi)?.score(Objective::Fopt, w)
}

/// Perturbs each parameter by `∓p` and records the mean relative change in
/// F_opt at `phi`. Cell failures are recorded in the row and do not stop the
/// run.
pub fn sensitivity_run(
    region: &FeasibleRegion,
    config: &SyntheticModelConfig,
    spec: &SensitivitySpec,
    phi: &DesignVector,
    weights: &ObjectiveWeights,
) -> Result<SensitivityTable> {
    spec.validate()?;
    let baseline = f_opt_at(*region, config.clone(), phi, weights)?;
    let cells: Vec<(SensitivityParam, f64)> = spec
        .parameters
        .iter()
        .flat_map(|p| [(*p, 1.0 - spec.perturbation), (*p, 1.0 + spec.perturbation)])
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(parameter, factor)| {
            let mut values = Vec::new();
            let mut errors = Vec::new();
            for _ in 0..spec.repeats {
                match f_opt_at(*region, parameter.apply(config, factor), phi, weights) {
                    Ok(v) => values.push(v),
                    Err(e) => errors.push(e.to_string()),
                }
            }
            // Offsetting by the first value keeps identical repeats bit-exact.
            let mean = values.first().map(|v0| v0 + values.iter().map(|v| v - v0).sum::<f64>() / values.len() as f64);
            let relative_change = mean.filter(|_| baseline != 0.0).map(|m| (m - baseline) / baseline);
            SensitivityRow { parameter, factor, baseline, mean, relative_change, evaluations: spec.repeats, errors }
        })
        .collect();
    Ok(SensitivityTable { baseline, rows })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub traces: usize,
    pub mean: Vec<f64>,
    /// Sample standard deviation; 0 for a single trace.
    pub std: Vec<f64>,
}

/// Per-index mean and std of best-so-far curves. Shorter curves are padded
/// with their last value.
pub fn convergence_summary(curves: &[Vec<f64>]) -> Result<ConvergenceSummary> {
    if curves.is_empty() {
        return Err(Error::Empty("trace list"));
    }
    if curves.iter().any(Vec::is_empty) {
        return Err(Error::Empty("trace"));
    }
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    let n = curves.len() as f64;
    let at = |c: &Vec<f64>, i: usize| c.get(i).copied().unwrap_or(*c.last().unwrap());
    let mut mean = Vec::with_capacity(len);
    let mut std = Vec::with_capacity(len);
    for i in 0..len {
        let m = curves.iter().map(|c| at(c, i)).sum::<f64>() / n;
        let s = if curves.len() < 2 {
            0.0
        } else {
            (curves.iter().map(|c| (at(c, i) - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        mean.push(m);
        std.push(s);
    }
    Ok(ConvergenceSummary { traces: curves.len(), mean, std })
}
