//! Surgical design vector and per-case feasible boxes.
//!
//! Component order is `theta_Lr, theta_Lp, theta_Rr, theta_Rp, l_Z[, l_RDP]`:
//! four cut-plane angles in degrees, the vertical donor offset in mm and,
//! for two-segment reconstructions only, the intermediate RDP point offset in mm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COMPONENT_NAMES: [&str; 6] = ["theta_Lr", "theta_Lp", "theta_Rr", "theta_Rp", "l_Z", "l_RDP"];

/// Urken defect class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DefectClass {
    /// Body
    B,
    /// Symphysis
    S,
    /// Ramus-body; needs two donor segments.
    RB,
}

impl DefectClass {
    pub fn segment_count(self) -> usize {
        match self {
            DefectClass::B | DefectClass::S => 1,
            DefectClass::RB => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignVector {
    pub theta_lr: f64,
    pub theta_lp: f64,
    pub theta_rr: f64,
    pub theta_rp: f64,
    pub l_z: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_rdp: Option<f64>,
}

impl DesignVector {
    /// The zero (baseline) configuration.
    pub fn baseline(segment_count: usize) -> Self {
        Self {
            theta_lr: 0.0,
            theta_lp: 0.0,
            theta_rr: 0.0,
            theta_rp: 0.0,
            l_z: 0.0,
            l_rdp: (segment_count == 2).then_some(0.0),
        }
    }

    /// Accepts 5 (single-segment) or 6 (two-segment) components.
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 5 && v.len() != 6 {
            return Err(Error::InvalidInput(format!("design vector needs 5 or 6 components, got {}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("design vector has non-finite components".into()));
        }
        Ok(Self {
            theta_lr: v[0],
            theta_lp: v[1],
            theta_rr: v[2],
            theta_rp: v[3],
            l_z: v[4],
            l_rdp: v.get(5).copied(),
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.theta_lr, self.theta_lp, self.theta_rr, self.theta_rp, self.l_z];
        v.extend(self.l_rdp);
        v
    }

    pub fn dims(&self) -> usize {
        5 + usize::from(self.l_rdp.is_some())
    }

    pub fn segment_count(&self) -> usize {
        self.dims() - 4
    }

    /// Mean of the four cut-plane angles, summed per side so that the
    /// result is exactly negated by [`mirrored`](Self::mirrored).
    pub fn mean_angle(&self) -> f64 {
        0.25 * ((self.theta_lr + self.theta_lp) + (self.theta_rr + self.theta_rp))
    }

    /// Left/right mirror image: side angles swap and change sign.
    pub fn mirrored(&self) -> Self {
        Self {
            theta_lr: -self.theta_rr,
            theta_lp: -self.theta_rp,
            theta_rr: -self.theta_lr,
            theta_rp: -self.theta_lp,
            ..*self
        }
    }
}

/// Symmetric box bounds: each component lies in `[-bound, bound]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleRegion {
    pub alpha_r: f64,
    pub alpha_p: f64,
    pub beta_r: f64,
    pub beta_p: f64,
    pub z: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

impl FeasibleRegion {
    pub fn new(alpha_r: f64, alpha_p: f64, beta_r: f64, beta_p: f64, z: f64, r: Option<f64>) -> Result<Self> {
        let region = Self { alpha_r, alpha_p, beta_r, beta_p, z, r };
        region.validate()?;
        Ok(region)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, b) in COMPONENT_NAMES.iter().zip(self.half_widths()) {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidInput(format!("bound for {name} must be positive, got {b}")));
            }
        }
        Ok(())
    }

    pub fn segment_count(&self) -> usize {
        1 + usize::from(self.r.is_some())
    }

    /// Region for the left/right mirrored anatomy.
    pub fn mirrored(&self) -> Self {
        Self { alpha_r: self.beta_r, alpha_p: self.beta_p, beta_r: self.alpha_r, beta_p: self.alpha_p, ..*self }
    }

    pub fn dims(&self) -> usize {
        4 + self.segment_count()
    }

    pub fn half_widths(&self) -> Vec<f64> {
        let mut v = vec![self.alpha_r, self.alpha_p, self.beta_r, self.beta_p, self.z];
        v.extend(self.r);
        v
    }

    fn check_arity(&self, phi: &DesignVector) -> Result<()> {
        if phi.dims() != self.dims() {
            return Err(Error::ArityMismatch { expected: self.dims(), got: phi.dims() });
        }
        Ok(())
    }

    /// Inclusive per-component box test.
    pub fn contains(&self, phi: &DesignVector) -> Result<bool> {
        self.check_arity(phi)?;
        Ok(phi.to_vec().iter().zip(self.half_widths()).all(|(x, b)| x.abs() <= b))
    }

    pub fn ensure_contains(&self, phi: &DesignVector) -> Result<()> {
        if self.contains(phi)? {
            Ok(())
        } else {
            Err(Error::Infeasible(format!("{:?} outside bounds {:?}", phi.to_vec(), self.half_widths())))
        }
    }

    /// Maps each component affinely so that its bound lands on ±100.
    pub fn normalize(&self, phi: &DesignVector) -> Result<Vec<f64>> {
        self.ensure_contains(phi)?;
        Ok(phi.to_vec().iter().zip(self.half_widths()).map(|(x, b)| 100.0 * x / b).collect())
    }

    pub fn denormalize(&self, normalized: &[f64]) -> Result<DesignVector> {
        if normalized.len() != self.dims() {
            return Err(Error::ArityMismatch { expected: self.dims(), got: normalized.len() });
        }
        if let Some(bad) = normalized.iter().find(|v| !(v.abs() <= 100.0)) {
            return Err(Error::OutOfRange(format!("normalized component {bad} outside [-100, 100]")));
        }
        let raw: Vec<f64> = normalized.iter().zip(self.half_widths()).map(|(v, b)| v * b / 100.0).collect();
        DesignVector::from_slice(&raw)
    }

    /// Unit-cube coordinates in `[0, 1]`, as used by the surrogate.
    pub fn to_unit(&self, phi: &DesignVector) -> Result<Vec<f64>> {
        Ok(self.normalize(phi)?.iter().map(|v| (v + 100.0) / 200.0).collect())
    }

    /// Inverse of [`to_unit`](Self::to_unit); inputs are clamped into `[0, 1]`.
    pub fn from_unit(&self, u: &[f64]) -> Result<DesignVector> {
        let normalized: Vec<f64> = u.iter().map(|x| (200.0 * x.clamp(0.0, 1.0) - 100.0).clamp(-100.0, 100.0)).collect();
        self.denormalize(&normalized)
    }
}
