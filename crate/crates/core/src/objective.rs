//! Union objectives built from cycle-averaged apposition and safety factors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveWeights {
    pub w1: f64,
    pub w2: f64,
    pub w_side: f64,
    pub sf_desired: f64,
    /// Count each interface pair in both orders, doubling the imbalance term.
    pub ordered_pairs: bool,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self { w1: 0.5, w2: 0.5, w_side: 0.5, sf_desired: 1.0, ordered_pairs: false }
    }
}

impl ObjectiveWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("w1", self.w1), ("w2", self.w2), ("w_side", self.w_side), ("sf_desired", self.sf_desired)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("objective weight {name} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    Fopt,
    Fsf,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fopt" => Ok(Objective::Fopt),
            "fsf" => Ok(Objective::Fsf),
            _ => Err(Error::Unknown { kind: "objective", name: s.to_string() }),
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::Fopt => "fopt",
            Objective::Fsf => "fsf",
        })
    }
}

pub fn cycle_average(trace: &[f64]) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::Empty("trace"));
    }
    Ok(trace.iter().sum::<f64>() / trace.len() as f64)
}

/// Total apposition reward minus the pairwise imbalance penalty.
pub fn f_opt(averages: &[f64], w: &ObjectiveWeights) -> Result<f64> {
    if averages.len() < 2 {
        return Err(Error::InvalidInput(format!("F_opt needs at least 2 interfaces, got {}", averages.len())));
    }
    let total: f64 = averages.iter().sum();
    let mut imbalance = 0.0;
    for (i, a) in averages.iter().enumerate() {
        for b in &averages[i + 1..] {
            imbalance += (a - b).abs();
        }
    }
    if w.ordered_pairs {
        imbalance *= 2.0;
    }
    Ok(w.w1 * total - w.w2 * imbalance)
}

/// Mean squared shortfall of the worst-case safety factor below the desired
/// value, summed over both sides. Infinite safety factors contribute nothing.
pub fn sf_penalty(sf_left: &[f64], sf_right: &[f64], w: &ObjectiveWeights) -> Result<f64> {
    if sf_left.len() != sf_right.len() {
        return Err(Error::DimensionMismatch { expected: sf_left.len(), got: sf_right.len() });
    }
    if sf_left.is_empty() {
        return Err(Error::Empty("safety factor trace"));
    }
    let shortfall = |sf: f64| {
        let s = (w.sf_desired - sf).max(0.0);
        s * s
    };
    let sum: f64 = sf_left.iter().zip(sf_right).map(|(&l, &r)| w.w_side * (shortfall(l) + shortfall(r))).sum();
    Ok(sum / sf_left.len() as f64)
}

pub fn f_sf(averages: &[f64], sf_left: &[f64], sf_right: &[f64], w: &ObjectiveWeights) -> Result<f64> {
    Ok(f_opt(averages, w)? - sf_penalty(sf_left, sf_right, w)?)
}

pub fn to_minimization(score: f64) -> f64 {
    -score
}
