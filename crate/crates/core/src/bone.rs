//! CT-derived bone material assignment and interface stimulus metrics.
//!
//! Units: density g/cm³, Young's modulus GPa (bone) or kPa (contact layer),
//! stresses MPa, contact pressure kPa, strain energy density mJ/mm³ (= MPa),
//! remodeling stimulus mJ/g.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RHO_MIN: f64 = 0.7;
pub const RHO_MAX: f64 = 1.8;
pub const HU_MIN: f64 = 350.0;
pub const HU_MAX: f64 = 1700.0;
/// Mean HU strictly above this is cortical.
pub const CORTICAL_HU_THRESHOLD: f64 = 1000.0;

/// g/cm³ → g/mm³.
pub const G_PER_CM3_TO_G_PER_MM3: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoneRegion {
    Cortical,
    Cancellous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoneMaterial {
    pub region: BoneRegion,
    pub density: f64,
    pub youngs_gpa: f64,
    pub poisson: f64,
    pub yield_mpa: f64,
}

impl BoneMaterial {
    pub fn cortical(density: f64) -> Self {
        Self { region: BoneRegion::Cortical, density, youngs_gpa: 13.7, poisson: 0.3, yield_mpa: 100.0 }
    }

    pub fn cancellous(density: f64) -> Self {
        Self { region: BoneRegion::Cancellous, density, youngs_gpa: 1.1, poisson: 0.3, yield_mpa: 5.0 }
    }
}

/// Region-wise donor materials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Materials {
    pub cortical: BoneMaterial,
    pub cancellous: BoneMaterial,
}

impl Materials {
    /// Defaults with densities mapped from the regions' mean HU.
    pub fn from_mean_hu(cortical_hu: f64, cancellous_hu: f64) -> Self {
        Self {
            cortical: BoneMaterial::cortical(hu_to_density(cortical_hu)),
            cancellous: BoneMaterial::cancellous(hu_to_density(cancellous_hu)),
        }
    }

    pub fn get(&self, region: BoneRegion) -> &BoneMaterial {
        match region {
            BoneRegion::Cortical => &self.cortical,
            BoneRegion::Cancellous => &self.cancellous,
        }
    }
}

/// Elastic-foundation contact layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    pub youngs_kpa: f64,
    pub poisson: f64,
    pub thickness_mm: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self { youngs_kpa: 30.0, poisson: 0.3, thickness_mm: 0.2 }
    }
}

impl ContactParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.poisson > 0.0 && self.poisson < 0.5) {
            return Err(Error::InvalidInput(format!("contact Poisson ratio must be in (0, 0.5), got {}", self.poisson)));
        }
        if !(self.thickness_mm > 0.0) || !(self.youngs_kpa > 0.0) {
            return Err(Error::InvalidInput("contact modulus and thickness must be positive".into()));
        }
        Ok(())
    }

    /// `(1-ν)E / ((1+ν)(1-2ν))` in kPa.
    pub fn foundation_modulus(&self) -> f64 {
        let nu = self.poisson;
        (1.0 - nu) * self.youngs_kpa / ((1.0 + nu) * (1.0 - 2.0 * nu))
    }

    /// Penetration depth at which the contact pressure reaches `pressure_kpa`.
    pub fn penetration_for_pressure(&self, pressure_kpa: f64) -> f64 {
        self.thickness_mm * (-(-pressure_kpa / self.foundation_modulus()).exp_m1())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusParams {
    /// Remodeling set-point, mJ/g.
    pub s0: f64,
    /// Half-width of the lazy zone.
    pub delta: f64,
}

impl Default for StimulusParams {
    fn default() -> Self {
        Self { s0: 0.036, delta: 0.1 }
    }
}

impl StimulusParams {
    pub fn threshold(&self) -> f64 {
        self.s0 * (1.0 + self.delta)
    }
}

/// Symmetric 3×3 tensor stored by its six independent components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SymTensor3 {
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
    pub xy: f64,
    pub yz: f64,
    pub xz: f64,
}

impl SymTensor3 {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match (i.min(j), i.max(j)) {
            (0, 0) => self.xx,
            (1, 1) => self.yy,
            (2, 2) => self.zz,
            (0, 1) => self.xy,
            (1, 2) => self.yz,
            (0, 2) => self.xz,
            _ => panic!("tensor index out of range"),
        }
    }
}

/// Linear density calibration, clamped to `[RHO_MIN, RHO_MAX]`.
pub fn hu_to_density(hu: f64) -> f64 {
    let rho = RHO_MIN + (RHO_MAX - RHO_MIN) * (hu - HU_MIN) / (HU_MAX - HU_MIN);
    rho.clamp(RHO_MIN, RHO_MAX)
}

pub fn classify_region(hu: f64) -> BoneRegion {
    if hu > CORTICAL_HU_THRESHOLD {
        BoneRegion::Cortical
    } else {
        BoneRegion::Cancellous
    }
}

/// Elastic-foundation contact pressure (kPa) at penetration `d` (mm).
pub fn contact_pressure(d: f64, params: &ContactParams) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::OutOfRange(format!("penetration must be nonnegative, got {d}")));
    }
    if d >= params.thickness_mm {
        return Err(Error::OutOfRange(format!(
            "penetration {d} mm reaches the contact layer thickness {} mm",
            params.thickness_mm
        )));
    }
    Ok(-params.foundation_modulus() * (-d / params.thickness_mm).ln_1p())
}

/// `½ Σ_ij σ_ij ε_ij` over the full tensor, so shear terms enter twice.
pub fn sed(stress: &SymTensor3, strain: &SymTensor3) -> f64 {
    let diag = stress.xx * strain.xx + stress.yy * strain.yy + stress.zz * strain.zz;
    let shear = stress.xy * strain.xy + stress.yz * strain.yz + stress.xz * strain.xz;
    0.5 * (diag + 2.0 * shear)
}

/// Remodeling stimulus (mJ/g) from SED (mJ/mm³) and apparent density (g/cm³).
pub fn stimulus(sed_value: f64, density: f64) -> Result<f64> {
    if !(density > 0.0) {
        return Err(Error::InvalidInput(format!("density must be positive, got {density}")));
    }
    Ok(sed_value / (density * G_PER_CM3_TO_G_PER_MM3))
}

/// Strict test `S > S0(1+δ)` where `S = sed/ρ`.
pub fn stimulus_exceeds(sed_value: f64, density: f64, params: &StimulusParams) -> Result<bool> {
    Ok(stimulus(sed_value, density)? > params.threshold())
}

/// Worst-case safety factor over the two bone regions. A region carrying no
/// stress contributes `+∞`, so a fully unloaded side returns `+∞`.
pub fn worst_safety_factor(max_p_cortical: f64, max_p_cancellous: f64, materials: &Materials) -> Result<f64> {
    if !(max_p_cortical >= 0.0 && max_p_cancellous >= 0.0) {
        return Err(Error::InvalidInput("max principal stresses must be nonnegative".into()));
    }
    let branch = |yield_mpa: f64, p: f64| if p == 0.0 { f64::INFINITY } else { yield_mpa / p };
    Ok(branch(materials.cortical.yield_mpa, max_p_cortical).min(branch(materials.cancellous.yield_mpa, max_p_cancellous)))
}
