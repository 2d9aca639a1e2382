//! Closed-form synthetic reconstruction response.
//!
//! Each interface carries `M` elements. Element `e` has a fixed coefficient
//! `u_e ∈ [0, 1)` and a bone region, both derived from a SplitMix64 hash of
//! `e` alone, so that every interface shares the same element population.
//!
//! At normalized time `t` the element penetration is
//!
//! ```text
//! d_e(φ, t) = min(max(0, d0·F·w(t) − m_e(φ)), t_c·(1 − margin))
//! w(t)      = sin²(πt)·(1 + boost·[t_a ≤ t ≤ t_b])
//! m_e(φ)    = (1 + h·u_e)·Σ_c s_c·|φ_c − φ*_c|
//! ```
//!
//! with `F` the muscle force scale and `s_c` the per-interface misalignment
//! scales in mm per degree or per mm. The middle interface of two-segment
//! cases is driven by the mean cut angle and `l_RDP` only.
//!
//! Penetration is turned into a stimulus through the elastic-foundation
//! pressure `p` (kPa), a linear-elastic energy proxy and the region density:
//!
//! ```text
//! SED = p²/(2E)         p in MPa, E in MPa, SED in mJ/mm³
//! S   = SED/(ρ·1e-3)    ρ in g/cm³, S in mJ/g
//! maxP = k·p            MPa
//! ```
//!
//! Left-side safety factors use the left and middle interfaces, right-side
//! ones the right and middle interfaces.

use serde::{Deserialize, Serialize};

use super::{assemble_result, EvaluationResult, Evaluator, InterfaceId, InterfaceStimuli, DEFAULT_STEPS};
use crate::bone::{contact_pressure, stimulus, BoneRegion, ContactParams, Materials, StimulusParams};
use crate::design::{DesignVector, FeasibleRegion};
use crate::error::{Error, Result};

/// Default planted optimum in normalized coordinates (±100 at the bounds).
pub const DEFAULT_PHI_STAR: [f64; 6] = [50.0, -50.0, 50.0, -50.0, 50.0, -50.0];

const COEFF_SALT: u64 = 0x5EED_0001;
const REGION_SALT: u64 = 0x5EED_0002;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn hash_unit(e: usize, salt: u64) -> f64 {
    (splitmix64(splitmix64(salt) ^ e as u64) >> 11) as f64 / (1u64 << 53) as f64
}

/// Per-element heterogeneity coefficient `u_e ∈ [0, 1)`.
pub fn element_coefficient(e: usize) -> f64 {
    hash_unit(e, COEFF_SALT)
}

pub fn element_is_cortical(e: usize, cortical_fraction: f64) -> bool {
    hash_unit(e, REGION_SALT) < cortical_fraction
}

/// Misalignment scales per interface. Left and right hold one entry per
/// design component; middle holds `[mean angle, l_RDP]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceScales {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    #[serde(default)]
    pub middle: Vec<f64>,
}

impl InterfaceScales {
    /// Scales such that a full half-width deviation of a weight-1 component
    /// costs `gain` mm. Own-side angles and `l_Z` weigh 1, the opposite side's
    /// angles 0.25 and `l_RDP` 0.5.
    pub fn from_region(region: &FeasibleRegion, gain: f64) -> Self {
        let hw = region.half_widths();
        let scaled = |weights: [f64; 6]| -> Vec<f64> { hw.iter().zip(weights).map(|(h, w)| gain * w / h).collect() };
        let middle = match region.r {
            Some(r) => {
                let mean_hw = 0.25 * ((hw[0] + hw[1]) + (hw[2] + hw[3]));
                vec![gain / mean_hw, gain / r]
            }
            None => Vec::new(),
        };
        Self {
            left: scaled([1.0, 1.0, 0.25, 0.25, 1.0, 0.5]),
            right: scaled([0.25, 0.25, 1.0, 1.0, 1.0, 0.5]),
            middle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticModelConfig {
    pub elements_per_interface: usize,
    pub steps: usize,
    /// Planted optimum in raw units; defaults to [`DEFAULT_PHI_STAR`] mapped
    /// into the case region.
    pub phi_star: Option<Vec<f64>>,
    /// Explicit scales (mm per unit deviation); derived from the region and
    /// `misalignment_gain` when absent.
    pub misalignment_scale: Option<InterfaceScales>,
    /// mm of misalignment at one half-width deviation of a weight-1 component.
    pub misalignment_gain: f64,
    /// Peak penetration `d0` outside the bolus window, mm.
    pub peak_gap: f64,
    pub bolus_window: [f64; 2],
    pub bolus_boost: f64,
    /// Amplitude `h` of the per-element misalignment spread.
    pub heterogeneity: f64,
    pub cortical_fraction: f64,
    /// Penetration is clipped to `t_contact·(1 − clip_margin)`.
    pub clip_margin: f64,
    /// Maximum principal stress per unit contact pressure.
    pub max_principal_factor: f64,
    pub cortical_hu: f64,
    pub cancellous_hu: f64,
    /// Overrides the HU-derived materials.
    pub materials: Option<Materials>,
    pub contact: ContactParams,
    pub stimulus: StimulusParams,
    /// Muscle force scale; multiplies the load amplitude.
    pub force_scale: f64,
    /// Optimal fiber length scale. Fiber lengths only enter the muscle
    /// dynamics of an external simulation, so the closed form ignores it.
    pub fiber_length_scale: f64,
}

impl Default for SyntheticModelConfig {
    fn default() -> Self {
        Self {
            elements_per_interface: 200,
            steps: DEFAULT_STEPS,
            phi_star: None,
            misalignment_scale: None,
            misalignment_gain: 0.03,
            peak_gap: 0.18,
            bolus_window: [0.35, 0.65],
            bolus_boost: 0.5,
            heterogeneity: 0.2,
            cortical_fraction: 0.3,
            clip_margin: 1e-6,
            max_principal_factor: 1.0,
            cortical_hu: 1600.0,
            cancellous_hu: 350.0,
            materials: None,
            contact: ContactParams::default(),
            stimulus: StimulusParams::default(),
            force_scale: 1.0,
            fiber_length_scale: 1.0,
        }
    }
}

impl SyntheticModelConfig {
    pub fn resolved_materials(&self) -> Materials {
        self.materials.unwrap_or_else(|| Materials::from_mean_hu(self.cortical_hu, self.cancellous_hu))
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.elements_per_interface == 0 {
            problems.push("elements_per_interface must be positive".to_string());
        }
        if self.steps < 2 {
            problems.push("steps must be at least 2".to_string());
        }
        if !(self.peak_gap > 0.0 && self.peak_gap.is_finite()) {
            problems.push(format!("peak_gap must be positive, got {}", self.peak_gap));
        }
        let [ta, tb] = self.bolus_window;
        if !(0.0 <= ta && ta <= tb && tb <= 1.0) {
            problems.push(format!("bolus_window must satisfy 0 <= t_a <= t_b <= 1, got [{ta}, {tb}]"));
        }
        if !(0.0..=1.0).contains(&self.cortical_fraction) {
            problems.push("cortical_fraction must lie in [0, 1]".to_string());
        }
        if !(self.clip_margin > 0.0 && self.clip_margin < 1.0) {
            problems.push("clip_margin must lie in (0, 1)".to_string());
        }
        for (name, v) in [
            ("bolus_boost", self.bolus_boost),
            ("heterogeneity", self.heterogeneity),
            ("misalignment_gain", self.misalignment_gain),
            ("max_principal_factor", self.max_principal_factor),
            ("force_scale", self.force_scale),
            ("fiber_length_scale", self.fiber_length_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                problems.push(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if let Err(e) = self.contact.validate() {
            problems.push(e.to_string());
        }
        if !(self.stimulus.s0 > 0.0 && self.stimulus.delta >= 0.0) {
            problems.push("stimulus requires s0 > 0 and delta >= 0".to_string());
        }
        let m = self.resolved_materials();
        for mat in [m.cortical, m.cancellous] {
            if !(mat.density > 0.0 && mat.youngs_gpa > 0.0 && mat.yield_mpa > 0.0) {
                problems.push(format!("{:?} material needs positive density, modulus and yield", mat.region));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Schema { path: "synthetic".into(), problems })
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticEvaluator {
    region: FeasibleRegion,
    config: SyntheticModelConfig,
    phi_star: DesignVector,
    scales: InterfaceScales,
    materials: Materials,
    coefficients: Vec<f64>,
    regions: Vec<BoneRegion>,
    waveform: Vec<f64>,
}

impl SyntheticEvaluator {
    pub fn new(region: FeasibleRegion, config: SyntheticModelConfig) -> Result<Self> {
        region.validate()?;
        config.validate()?;
        let phi_star = match &config.phi_star {
            Some(v) => DesignVector::from_slice(v)?,
            None => region.denormalize(&DEFAULT_PHI_STAR[..region.dims()])?,
        };
        region.ensure_contains(&phi_star)?;
        let scales = config.misalignment_scale.clone().unwrap_or_else(|| InterfaceScales::from_region(&region, config.misalignment_gain));
        let dims = region.dims();
        if scales.left.len() < dims || scales.right.len() < dims || (dims == 6 && scales.middle.len() != 2) {
            return Err(Error::InvalidInput("misalignment scales do not match the design dimension".into()));
        }
        if scales.left.iter().chain(&scales.right).chain(&scales.middle).any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidInput("misalignment scales must be nonnegative".into()));
        }
        let m = config.elements_per_interface;
        let coefficients = (0..m).map(element_coefficient).collect();
        let regions = (0..m)
            .map(|e| {
                if element_is_cortical(e, config.cortical_fraction) {
                    BoneRegion::Cortical
                } else {
                    BoneRegion::Cancellous
                }
            })
            .collect();
        let waveform = (0..config.steps).map(|i| Self::waveform_at(&config, i as f64 / (config.steps - 1) as f64)).collect();
        Ok(Self { materials: config.resolved_materials(), region, config, phi_star, scales, coefficients, regions, waveform })
    }

    fn waveform_at(config: &SyntheticModelConfig, t: f64) -> f64 {
        let s = (std::f64::consts::PI * t).sin();
        let boost = if config.bolus_window[0] <= t && t <= config.bolus_window[1] { config.bolus_boost } else { 0.0 };
        s * s * (1.0 + boost)
    }

    pub fn config(&self) -> &SyntheticModelConfig {
        &self.config
    }

    pub fn phi_star(&self) -> &DesignVector {
        &self.phi_star
    }

    pub fn scales(&self) -> &InterfaceScales {
        &self.scales
    }

    pub fn materials(&self) -> &Materials {
        &self.materials
    }

    pub fn element_region(&self, e: usize) -> BoneRegion {
        self.regions[e]
    }

    /// Normalized time of step `i`.
    pub fn time(&self, i: usize) -> f64 {
        i as f64 / (self.config.steps - 1) as f64
    }

    /// Left/right mirrored model: the region, planted optimum and scales are
    /// reflected so that `mirrored().evaluate(φ.mirrored())` swaps the left
    /// and right outputs of `evaluate(φ)`.
    pub fn mirrored(&self) -> Self {
        let swap = |v: &[f64]| -> Vec<f64> {
            let mut w = v.to_vec();
            w.swap(0, 2);
            w.swap(1, 3);
            w
        };
        let mut config = self.config.clone();
        config.phi_star = Some(self.phi_star.mirrored().to_vec());
        let scales = InterfaceScales { left: swap(&self.scales.right), right: swap(&self.scales.left), middle: self.scales.middle.clone() };
        config.misalignment_scale = Some(scales.clone());
        Self { region: self.region.mirrored(), config, phi_star: self.phi_star.mirrored(), scales, ..self.clone() }
    }

    /// Element-independent misalignment `Σ_c s_c·|φ_c − φ*_c|` (mm).
    ///
    /// Terms are grouped per side so that mirroring reproduces the sum
    /// bit for bit.
    pub fn misalignment(&self, id: InterfaceId, phi: &DesignVector) -> Result<f64> {
        self.check_arity(phi)?;
        let (p, q) = (phi, &self.phi_star);
        if id == InterfaceId::Middle {
            let (Some(rdp), Some(rdp_star)) = (p.l_rdp, q.l_rdp) else {
                return Err(Error::InvalidInput("middle interface requires a two-segment design".into()));
            };
            let s = &self.scales.middle;
            return Ok(s[0] * (p.mean_angle() - q.mean_angle()).abs() + s[1] * (rdp - rdp_star).abs());
        }
        let s = if id == InterfaceId::Left { &self.scales.left } else { &self.scales.right };
        let left = s[0] * (p.theta_lr - q.theta_lr).abs() + s[1] * (p.theta_lp - q.theta_lp).abs();
        let right = s[2] * (p.theta_rr - q.theta_rr).abs() + s[3] * (p.theta_rp - q.theta_rp).abs();
        let mut m = (left + right) + s[4] * (p.l_z - q.l_z).abs();
        if let (Some(a), Some(b)) = (p.l_rdp, q.l_rdp) {
            m += s[5] * (a - b).abs();
        }
        Ok(m)
    }

    fn check_arity(&self, phi: &DesignVector) -> Result<()> {
        if phi.dims() != self.region.dims() {
            return Err(Error::ArityMismatch { expected: self.region.dims(), got: phi.dims() });
        }
        Ok(())
    }

    fn clip(&self) -> f64 {
        self.config.contact.thickness_mm * (1.0 - self.config.clip_margin)
    }

    fn penetration_from(&self, base_misalignment: f64, e: usize, w: f64) -> f64 {
        let m = base_misalignment * (1.0 + self.config.heterogeneity * self.coefficients[e]);
        (self.config.peak_gap * self.config.force_scale * w - m).max(0.0).min(self.clip())
    }

    /// Penetration (mm) of element `e` at normalized time `t_norm`.
    pub fn element_penetration(&self, phi: &DesignVector, id: InterfaceId, e: usize, t_norm: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t_norm) {
            return Err(Error::OutOfRange(format!("normalized time {t_norm} outside [0, 1]")));
        }
        self.check_element(e)?;
        let m = self.misalignment(id, phi)?;
        Ok(self.penetration_from(m, e, Self::waveform_at(&self.config, t_norm)))
    }

    fn check_element(&self, e: usize) -> Result<()> {
        if e >= self.coefficients.len() {
            return Err(Error::OutOfRange(format!("element {e} >= {}", self.coefficients.len())));
        }
        Ok(())
    }

    /// `(S in mJ/g, maxP in MPa)` for a penetration `d` in a given region.
    pub fn stimulus_from_penetration(&self, d: f64, region: BoneRegion) -> Result<(f64, f64)> {
        let p_mpa = contact_pressure(d, &self.config.contact)? * 1e-3;
        let mat = self.materials.get(region);
        let sed = p_mpa * p_mpa / (2.0 * mat.youngs_gpa * 1e3);
        Ok((stimulus(sed, mat.density)?, self.config.max_principal_factor * p_mpa))
    }

    /// Stimulus, maximum principal stress and region of element `e` at time `t_norm`.
    pub fn element_stimulus(&self, phi: &DesignVector, id: InterfaceId, e: usize, t_norm: f64) -> Result<(f64, f64, BoneRegion)> {
        let d = self.element_penetration(phi, id, e, t_norm)?;
        let region = self.regions[e];
        let (s, p) = self.stimulus_from_penetration(d, region)?;
        Ok((s, p, region))
    }

    /// Element-resolved traces for every interface of the case.
    pub fn stimuli(&self, phi: &DesignVector) -> Result<Vec<InterfaceStimuli>> {
        self.region.ensure_contains(phi)?;
        InterfaceId::for_segments(self.region.segment_count())
            .iter()
            .map(|&id| {
                let m = self.misalignment(id, phi)?;
                let mut stimulus = Vec::with_capacity(self.coefficients.len());
                let mut max_principal = Vec::with_capacity(self.coefficients.len());
                for (e, &region) in self.regions.iter().enumerate() {
                    let (s, p): (Vec<f64>, Vec<f64>) = self
                        .waveform
                        .iter()
                        .map(|&w| self.stimulus_from_penetration(self.penetration_from(m, e, w), region))
                        .collect::<Result<Vec<_>>>()?
                        .into_iter()
                        .unzip();
                    stimulus.push(s);
                    max_principal.push(p);
                }
                Ok(InterfaceStimuli { id, regions: self.regions.clone(), stimulus, max_principal })
            })
            .collect()
    }
}

impl Evaluator for SyntheticEvaluator {
    fn region(&self) -> &FeasibleRegion {
        &self.region
    }

    fn evaluate(&self, phi: &DesignVector) -> Result<EvaluationResult> {
        let stimuli = self.stimuli(phi)?;
        assemble_result(&stimuli, &self.materials, &self.config.stimulus)
    }
}
