use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TABLES_JSON: &str = include_str!("../../data/anatomy_tables.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    /// Reported regression error; stored, not propagated.
    pub error: f64,
}

impl Regression {
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcsaRegressions {
    pub wpcs: Regression,
    pub bpcs: Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub branch: String,
    /// Muscle code without the side prefix.
    pub muscle: String,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnatomyTables {
    pub version: String,
    pub force_per_area_n_per_cm2: f64,
    pub muscle_length_ratios: BTreeMap<String, f64>,
    pub branches: BTreeMap<String, Vec<Branch>>,
    pub pcsa_regressions: BTreeMap<String, PcsaRegressions>,
    pub ligament_deltas_mm: BTreeMap<String, f64>,
}

impl AnatomyTables {
    /// Tables shipped with the crate.
    pub fn builtin() -> &'static AnatomyTables {
        static TABLES: OnceLock<AnatomyTables> = OnceLock::new();
        TABLES.get_or_init(|| serde_json::from_str(TABLES_JSON).expect("shipped anatomy tables parse"))
    }

    /// Length ratio for a side-prefixed (`RAT`) or bare (`AT`) muscle code.
    pub fn length_ratio(&self, muscle: &str) -> Result<f64> {
        let bare = strip_side(muscle);
        self.muscle_length_ratios
            .get(bare)
            .copied()
            .ok_or_else(|| Error::Unknown { kind: "muscle", name: muscle.to_string() })
    }

    fn regressions(&self, group: &str) -> Result<&PcsaRegressions> {
        self.pcsa_regressions.get(group).ok_or_else(|| Error::Unknown { kind: "muscle group", name: group.to_string() })
    }

    fn branches(&self, group: &str) -> Result<&[Branch]> {
        self.branches.get(group).map(Vec::as_slice).ok_or_else(|| Error::Unknown { kind: "muscle group", name: group.to_string() })
    }
}

fn strip_side(muscle: &str) -> &str {
    match muscle.as_bytes() {
        [b'R' | b'L', _, _] => &muscle[1..],
        _ => muscle,
    }
}

/// `(ℓ_opt, ℓ_max) = (ℓ_cur, r_m·ℓ_cur)`.
pub fn update_muscle(length_cur: f64, muscle: &str) -> Result<(f64, f64)> {
    update_muscle_with(AnatomyTables::builtin(), length_cur, muscle)
}

pub fn update_muscle_with(tables: &AnatomyTables, length_cur: f64, muscle: &str) -> Result<(f64, f64)> {
    if !(length_cur > 0.0 && length_cur.is_finite()) {
        return Err(Error::InvalidInput(format!("muscle length must be positive, got {length_cur}")));
    }
    let r = tables.length_ratio(muscle)?;
    Ok((length_cur, r * length_cur))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcsaEstimate {
    pub wpcs: f64,
    pub bpcs: f64,
    pub mean: f64,
}

/// Both regressions from a scan cross-section (cm²); negative outputs are
/// clamped to zero.
pub fn pcsa_estimate(scs: f64, group: &str) -> Result<PcsaEstimate> {
    pcsa_estimate_with(AnatomyTables::builtin(), scs, group)
}

pub fn pcsa_estimate_with(tables: &AnatomyTables, scs: f64, group: &str) -> Result<PcsaEstimate> {
    if !(scs >= 0.0 && scs.is_finite()) {
        return Err(Error::InvalidInput(format!("scan cross-section must be nonnegative, got {scs}")));
    }
    let reg = tables.regressions(group)?;
    let clamp = |name: &str, v: f64| {
        if v < 0.0 {
            log::warn!("{group} {name} regression gives {v} cm² at SCS {scs}; clamped to 0");
            0.0
        } else {
            v
        }
    };
    let wpcs = clamp("WPCS", reg.wpcs.eval(scs));
    let bpcs = clamp("BPCS", reg.bpcs.eval(scs));
    Ok(PcsaEstimate { wpcs, bpcs, mean: 0.5 * (wpcs + bpcs) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchForce {
    pub branch: String,
    pub muscle: String,
    pub force: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupForce {
    pub total: f64,
    pub branches: Vec<BranchForce>,
}

/// Group force `40·PCSA` split over the branches; the last branch takes the
/// remainder so the parts sum to the total up to one rounding.
pub fn max_force(pcsa: f64, group: &str) -> Result<GroupForce> {
    max_force_with(AnatomyTables::builtin(), pcsa, group)
}

pub fn max_force_with(tables: &AnatomyTables, pcsa: f64, group: &str) -> Result<GroupForce> {
    if !(pcsa >= 0.0 && pcsa.is_finite()) {
        return Err(Error::InvalidInput(format!("PCSA must be nonnegative, got {pcsa}")));
    }
    let total = tables.force_per_area_n_per_cm2 * pcsa;
    let spec = tables.branches(group)?;
    let mut assigned = 0.0;
    let branches = spec
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let force = if i + 1 == spec.len() { total - assigned } else { total * b.proportion };
            assigned += force;
            BranchForce { branch: b.branch.clone(), muscle: b.muscle.clone(), force }
        })
        .collect();
    Ok(GroupForce { total, branches })
}

/// Rest length `ℓ_cur + δ_g`.
pub fn ligament_rest(length_cur: f64, group: &str) -> Result<f64> {
    ligament_rest_with(AnatomyTables::builtin(), length_cur, group)
}

pub fn ligament_rest_with(tables: &AnatomyTables, length_cur: f64, group: &str) -> Result<f64> {
    if !(length_cur > 0.0 && length_cur.is_finite()) {
        return Err(Error::InvalidInput(format!("ligament length must be positive, got {length_cur}")));
    }
    let delta = tables
        .ligament_deltas_mm
        .get(group)
        .ok_or_else(|| Error::Unknown { kind: "ligament group", name: group.to_string() })?;
    Ok(length_cur + delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn muscle_length_examples() {
        assert_eq!(update_muscle(50.0, "RAT").unwrap(), (50.0, 63.5));
        let (o, m) = update_muscle(40.0, "RDM").unwrap();
        assert_eq!(o, 40.0);
        assert!((m - 61.2).abs() < 1e-12);
        assert!(update_muscle(40.0, "RXX").is_err());
        assert!(update_muscle(0.0, "RAT").is_err());
        let mut t = AnatomyTables::builtin().clone();
        t.muscle_length_ratios.insert("XX".into(), 1.0);
        assert_eq!(update_muscle_with(&t, 12.0, "LXX").unwrap(), (12.0, 12.0));
    }

    #[test]
    fn every_ratio_is_preserved() {
        let t = AnatomyTables::builtin();
        assert_eq!(t.muscle_length_ratios.len(), 12);
        for (code, r) in &t.muscle_length_ratios {
            for side in ["R", "L"] {
                let (o, m) = update_muscle(37.3, &format!("{side}{code}")).unwrap();
                assert!((m / o - r).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pcsa_examples() {
        let e = pcsa_estimate(10.0, "masseter").unwrap();
        assert!((e.wpcs - 16.24).abs() < 1e-9);
        assert!((e.bpcs - 11.95).abs() < 1e-9);
        assert!((e.mean - 14.095).abs() < 1e-9);
        let e = pcsa_estimate(0.0, "temporalis").unwrap();
        assert_eq!((e.wpcs, e.bpcs, e.mean), (0.0, 0.0, 0.0));
        let e = pcsa_estimate(5.0, "lateral_pterygoid").unwrap();
        assert!((e.mean - 3.735).abs() < 1e-12);
        assert!(pcsa_estimate(5.0, "buccinator").is_err());
        assert!(pcsa_estimate(-1.0, "masseter").is_err());
    }

    #[test]
    fn force_examples() {
        let f = max_force(14.095, "masseter").unwrap();
        assert!((f.total - 563.8).abs() < 1e-9);
        assert!((f.branches[0].force - 394.66).abs() < 1e-9);
        assert!((f.branches[1].force - 169.14).abs() < 1e-9);
        let f = max_force(10.0, "temporalis").unwrap();
        let forces: Vec<f64> = f.branches.iter().map(|b| b.force).collect();
        for (got, want) in forces.iter().zip([192.0, 116.0, 92.0]) {
            assert!((got - want).abs() < 1e-9);
        }
        assert_eq!(max_force(3.0, "medial_pterygoid").unwrap().branches[0].force, 120.0);
    }

    #[test]
    fn ligament_examples() {
        assert_eq!(ligament_rest(30.0, "stm").unwrap(), 31.5);
        assert_eq!(ligament_rest(30.0, "sphm").unwrap(), 35.5);
        assert!(ligament_rest(30.0, "acl").is_err());
    }

    proptest! {
        #[test]
        fn branch_forces_partition_total(pcsa in 0.0f64..40.0, g in 0usize..4) {
            let group = ["masseter", "temporalis", "medial_pterygoid", "lateral_pterygoid"][g];
            let f = max_force(pcsa, group).unwrap();
            let sum: f64 = f.branches.iter().map(|b| b.force).sum();
            prop_assert!((sum - f.total).abs() <= f64::EPSILON * f.total);
        }

        #[test]
        fn ligament_rest_is_monotone(a in 0.1f64..100.0, b in 0.1f64..100.0) {
            prop_assume!(a < b);
            prop_assert!(ligament_rest(a, "stm").unwrap() < ligament_rest(b, "stm").unwrap());
        }
    }
}
