//! Reconstruction evaluators.
//!
//! An [`Evaluator`] maps a feasible design vector to per-interface apposition
//! traces and per-side worst-case safety factors over one chewing cycle. The
//! built-in [`SyntheticEvaluator`] is a closed-form stand-in for a
//! musculoskeletal and finite-element simulation; [`ExternalEvaluator`]
//! delegates to a subprocess.

mod external;
mod synthetic;

pub use external::ExternalEvaluator;
pub use synthetic::{
    element_coefficient, element_is_cortical, InterfaceScales, SyntheticEvaluator, SyntheticModelConfig,
    DEFAULT_PHI_STAR,
};

use serde::{Deserialize, Serialize};

use crate::bone::{worst_safety_factor, BoneRegion, Materials, StimulusParams};
use crate::design::{DesignVector, FeasibleRegion};
use crate::error::{Error, Result};
use crate::objective::{cycle_average, f_opt, f_sf, Objective, ObjectiveWeights};

/// Samples per chewing cycle.
pub const DEFAULT_STEPS: usize = 62;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterfaceId {
    Left,
    Right,
    Middle,
}

impl InterfaceId {
    pub fn for_segments(segment_count: usize) -> &'static [InterfaceId] {
        if segment_count == 2 {
            &[InterfaceId::Left, InterfaceId::Right, InterfaceId::Middle]
        } else {
            &[InterfaceId::Left, InterfaceId::Right]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub n: usize,
    pub apposition_left: Vec<f64>,
    pub apposition_right: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub apposition_middle: Option<Vec<f64>>,
    /// `null` in JSON encodes an unloaded (infinite) safety factor.
    #[serde(with = "inf_as_null")]
    pub sf_left: Vec<f64>,
    #[serde(with = "inf_as_null")]
    pub sf_right: Vec<f64>,
}

impl EvaluationResult {
    pub fn validate(&self) -> Result<()> {
        let mut traces = vec![&self.apposition_left, &self.apposition_right];
        traces.extend(self.apposition_middle.as_ref());
        for t in traces {
            if t.len() != self.n {
                return Err(Error::DimensionMismatch { expected: self.n, got: t.len() });
            }
            if let Some(bad) = t.iter().find(|a| !(0.0..=1.0).contains(*a)) {
                return Err(Error::OutOfRange(format!("apposition fraction {bad} outside [0, 1]")));
            }
        }
        for t in [&self.sf_left, &self.sf_right] {
            if t.len() != self.n {
                return Err(Error::DimensionMismatch { expected: self.n, got: t.len() });
            }
            if t.iter().any(|s| s.is_nan() || *s < 0.0) {
                return Err(Error::OutOfRange("safety factor must be nonnegative".into()));
            }
        }
        if self.n == 0 {
            return Err(Error::Empty("evaluation result"));
        }
        Ok(())
    }

    pub fn interfaces(&self) -> Vec<InterfaceId> {
        InterfaceId::for_segments(1 + usize::from(self.apposition_middle.is_some())).to_vec()
    }

    pub fn trace(&self, id: InterfaceId) -> Option<&[f64]> {
        match id {
            InterfaceId::Left => Some(&self.apposition_left),
            InterfaceId::Right => Some(&self.apposition_right),
            InterfaceId::Middle => self.apposition_middle.as_deref(),
        }
    }

    /// Cycle averages in interface order `Left, Right[, Middle]`.
    pub fn averages(&self) -> Result<Vec<f64>> {
        self.interfaces().iter().map(|&id| cycle_average(self.trace(id).unwrap())).collect()
    }

    pub fn score(&self, objective: Objective, w: &ObjectiveWeights) -> Result<f64> {
        let avg = self.averages()?;
        match objective {
            Objective::Fopt => f_opt(&avg, w),
            Objective::Fsf => f_sf(&avg, &self.sf_left, &self.sf_right, w),
        }
    }
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let opts: Vec<Option<f64>> = v.iter().map(|x| x.is_finite().then_some(*x)).collect();
        opts.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let opts: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(opts.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

/// Element-resolved output for one interface.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceStimuli {
    pub id: InterfaceId,
    pub regions: Vec<BoneRegion>,
    /// `stimulus[e][i]`, mJ/g.
    pub stimulus: Vec<Vec<f64>>,
    /// `max_principal[e][i]`, MPa.
    pub max_principal: Vec<Vec<f64>>,
}

impl InterfaceStimuli {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

/// Counts threshold exceedances per step and takes the worst-case safety
/// factor per side. Middle-interface elements load both sides.
pub fn assemble_result(
    interfaces: &[InterfaceStimuli],
    materials: &Materials,
    stimulus: &StimulusParams,
) -> Result<EvaluationResult> {
    let find = |id| interfaces.iter().find(|s| s.id == id);
    let (left, right) = match (find(InterfaceId::Left), find(InterfaceId::Right)) {
        (Some(l), Some(r)) => (l, r),
        _ => return Err(Error::InvalidInput("left and right interfaces are required".into())),
    };
    let middle = find(InterfaceId::Middle);
    let n = left.stimulus.first().map_or(0, Vec::len);
    for s in interfaces {
        if s.is_empty() {
            return Err(Error::Empty("interface element set"));
        }
        if s.stimulus.len() != s.len() || s.max_principal.len() != s.len() {
            return Err(Error::DimensionMismatch { expected: s.len(), got: s.stimulus.len() });
        }
        if let Some(bad) = s.stimulus.iter().chain(&s.max_principal).find(|t| t.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: bad.len() });
        }
    }
    if n == 0 {
        return Err(Error::Empty("time series"));
    }

    let threshold = stimulus.threshold();
    let apposition = |s: &InterfaceStimuli| -> Vec<f64> {
        (0..n)
            .map(|i| s.stimulus.iter().filter(|e| e[i] > threshold).count() as f64 / s.len() as f64)
            .collect()
    };
    let side_sf = |own: &InterfaceStimuli| -> Result<Vec<f64>> {
        (0..n)
            .map(|i| {
                let mut worst = [0.0f64; 2];
                for s in std::iter::once(own).chain(middle) {
                    for (region, p) in s.regions.iter().zip(&s.max_principal) {
                        let slot = &mut worst[usize::from(*region == BoneRegion::Cancellous)];
                        *slot = slot.max(p[i]);
                    }
                }
                worst_safety_factor(worst[0], worst[1], materials)
            })
            .collect()
    };

    Ok(EvaluationResult {
        n,
        apposition_left: apposition(left),
        apposition_right: apposition(right),
        apposition_middle: middle.map(apposition),
        sf_left: side_sf(left)?,
        sf_right: side_sf(right)?,
    })
}

pub trait Evaluator: Send + Sync {
    fn region(&self) -> &FeasibleRegion;

    /// Fails with [`Error::Infeasible`] outside the region.
    fn evaluate(&self, phi: &DesignVector) -> Result<EvaluationResult>;
}
