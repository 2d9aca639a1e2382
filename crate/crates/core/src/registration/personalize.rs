use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::anatomy::{ligament_rest, max_force, pcsa_estimate, update_muscle, AnatomyTables, PcsaEstimate};
use super::cpd::{cpd_register, transfer_landmark, CpdParams, DeformationField};
use super::rigid::{fit_similarity, rigid_init, RigidTransform};
use super::tmj::{tmj_blend, TmjParams};
use crate::error::{Error, Result};
use crate::geometry::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Support {
    Mandible,
    Maxilla,
    /// Follows the mandible through a similarity transform.
    Hyoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairedClouds {
    pub template: Vec<Point3>,
    pub patient: Vec<Point3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Landmark {
    pub name: String,
    pub support: Support,
    pub position: Point3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuscleSpec {
    /// Side-prefixed code, e.g. `RSM`.
    pub muscle: String,
    pub origin: String,
    pub insertion: String,
    /// Template maximum force, kept when no PCSA update applies.
    pub f_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LigamentSpec {
    pub name: String,
    /// `stm` or `sphm`.
    pub group: String,
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TmjInput {
    pub condyle: PairedClouds,
    pub fossa: PairedClouds,
    pub disc: Vec<Point3>,
    pub capsule: Vec<Point3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonalizationInput {
    pub mandible: PairedClouds,
    pub maxilla: PairedClouds,
    pub landmarks: Vec<Landmark>,
    pub muscles: Vec<MuscleSpec>,
    #[serde(default)]
    pub ligaments: Vec<LigamentSpec>,
    /// Measured scan cross-sections (cm²) keyed by side (`R`/`L`) then group.
    #[serde(default)]
    pub scs: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    pub tmj: Option<TmjInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PersonalizationConfig {
    pub icp_max_iters: usize,
    pub icp_tol: f64,
    pub cpd: CpdParams,
    /// Kernel width for landmark transfer; the field's own width when absent.
    pub transfer_beta: Option<f64>,
    /// Snap transferred landmarks to the nearest patient point.
    pub project: bool,
    pub tmj: TmjParams,
}

impl Default for PersonalizationConfig {
    fn default() -> Self {
        Self { icp_max_iters: 100, icp_tol: 1e-9, cpd: CpdParams::default(), transfer_beta: None, project: true, tmj: TmjParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuscleParameters {
    pub l_opt: f64,
    pub l_max: f64,
    pub f_max: f64,
    pub pcsa: Option<PcsaEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LigamentParameters {
    pub group: String,
    pub rest_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSummary {
    pub converged: bool,
    pub iterations: usize,
    pub sigma2: f64,
    pub beta: f64,
}

impl From<&DeformationField> for FieldSummary {
    fn from(f: &DeformationField) -> Self {
        Self { converged: f.converged, iterations: f.iterations, sigma2: f.sigma2, beta: f.beta }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TmjResult {
    pub disc: Vec<Point3>,
    pub capsule: Vec<Point3>,
    pub condyle_field: FieldSummary,
    pub fossa_field: FieldSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientParameters {
    pub tables_version: String,
    pub rigid: RigidTransform,
    pub mandible_field: FieldSummary,
    pub maxilla_field: FieldSummary,
    pub landmarks: BTreeMap<String, Point3>,
    pub muscles: BTreeMap<String, MuscleParameters>,
    pub ligaments: BTreeMap<String, LigamentParameters>,
    pub tmj_params: TmjParams,
    pub tmj: Option<TmjResult>,
}

/// PCSA group and side of a side-prefixed muscle code, if the muscle
/// receives a PCSA-based force.
fn pcsa_group(muscle: &str) -> Option<(&'static str, &str)> {
    let tables = AnatomyTables::builtin();
    let (side, bare) = muscle.split_at(1.min(muscle.len()));
    tables
        .branches
        .iter()
        .find(|(_, bs)| bs.iter().any(|b| b.muscle == bare))
        .map(|(g, _)| match g.as_str() {
            "masseter" => "masseter",
            "temporalis" => "temporalis",
            "medial_pterygoid" => "medial_pterygoid",
            _ => "lateral_pterygoid",
        })
        .map(|g| (g, side))
}

fn nearest_point(p: &Point3, cloud: &[Point3]) -> Point3 {
    crate::geometry::nearest_index(p, cloud).map_or(*p, |i| cloud[i])
}

/// Template-to-patient personalization: maxilla-based rigid alignment, CPD
/// on mandible and maxilla, landmark transfer with surface projection,
/// muscle, ligament and TMJ updates.
pub fn personalize(input: &PersonalizationInput, config: &PersonalizationConfig) -> Result<PatientParameters> {
    let rigid = rigid_init(&input.maxilla.template, &input.maxilla.patient, config.icp_max_iters, config.icp_tol)?;
    let align = |pts: &[Point3]| -> Vec<Point3> { pts.iter().map(|p| rigid.apply(p)).collect() };
    let mandible_t = align(&input.mandible.template);
    let maxilla_t = align(&input.maxilla.template);

    let (mandible, maxilla) = rayon::join(
        || cpd_register(&mandible_t, &input.mandible.patient, &config.cpd),
        || cpd_register(&maxilla_t, &input.maxilla.patient, &config.cpd),
    );
    let (mandible, maxilla) = (mandible?, maxilla?);

    let mut landmarks = BTreeMap::new();
    let mut mandible_pairs = (Vec::new(), Vec::new());
    for l in &input.landmarks {
        if landmarks.contains_key(&l.name) {
            return Err(Error::InvalidInput(format!("duplicate landmark `{}`", l.name)));
        }
        let p = rigid.apply(&l.position);
        let (field, surface) = match l.support {
            Support::Mandible => (&mandible, &input.mandible.patient),
            Support::Maxilla => (&maxilla, &input.maxilla.patient),
            Support::Hyoid => continue,
        };
        let moved = transfer_landmark(&p, field, config.transfer_beta)?;
        let moved = if config.project { nearest_point(&moved, surface) } else { moved };
        if l.support == Support::Mandible {
            mandible_pairs.0.push(p);
            mandible_pairs.1.push(moved);
        }
        landmarks.insert(l.name.clone(), moved);
    }
    let hyoid: Vec<&Landmark> = input.landmarks.iter().filter(|l| l.support == Support::Hyoid).collect();
    if !hyoid.is_empty() {
        let sim = fit_similarity(&mandible_pairs.0, &mandible_pairs.1)?;
        for l in hyoid {
            landmarks.insert(l.name.clone(), sim.apply(&rigid.apply(&l.position)));
        }
    }

    let lookup = |name: &str| landmarks.get(name).copied().ok_or_else(|| Error::Unknown { kind: "landmark", name: name.to_string() });
    let mut pcsa_cache: BTreeMap<(String, String), (PcsaEstimate, super::anatomy::GroupForce)> = BTreeMap::new();
    let mut muscles = BTreeMap::new();
    for m in &input.muscles {
        let length = (lookup(&m.insertion)? - lookup(&m.origin)?).norm();
        let (l_opt, l_max) = update_muscle(length, &m.muscle)?;
        let mut params = MuscleParameters { l_opt, l_max, f_max: m.f_max, pcsa: None };
        if let Some((group, side)) = pcsa_group(&m.muscle) {
            if let Some(scs) = input.scs.get(side).and_then(|g| g.get(group)) {
                let key = (side.to_string(), group.to_string());
                if !pcsa_cache.contains_key(&key) {
                    let est = pcsa_estimate(*scs, group)?;
                    let force = max_force(est.mean, group)?;
                    pcsa_cache.insert(key.clone(), (est, force));
                }
                let (est, force) = &pcsa_cache[&key];
                let bare = &m.muscle[1..];
                if let Some(b) = force.branches.iter().find(|b| b.muscle == bare) {
                    params.f_max = b.force;
                    params.pcsa = Some(*est);
                }
            }
        }
        if muscles.insert(m.muscle.clone(), params).is_some() {
            return Err(Error::InvalidInput(format!("duplicate muscle `{}`", m.muscle)));
        }
    }

    let mut ligaments = BTreeMap::new();
    for l in &input.ligaments {
        let length = (lookup(&l.to)? - lookup(&l.from)?).norm();
        ligaments.insert(l.name.clone(), LigamentParameters { group: l.group.clone(), rest_length: ligament_rest(length, &l.group)? });
    }

    let tmj = match &input.tmj {
        None => None,
        Some(t) => {
            let cond_t = align(&t.condyle.template);
            let fossa_t = align(&t.fossa.template);
            let (fc, ff) = rayon::join(
                || cpd_register(&cond_t, &t.condyle.patient, &config.cpd),
                || cpd_register(&fossa_t, &t.fossa.patient, &config.cpd),
            );
            let (fc, ff) = (fc?, ff?);
            let blend = |pts: &[Point3], q: f64| -> Result<Vec<Point3>> {
                pts.iter().map(|p| tmj_blend(&rigid.apply(p), &fc, &ff, &cond_t, &fossa_t, q, &config.tmj)).collect()
            };
            Some(TmjResult {
                disc: blend(&t.disc, config.tmj.q_disc)?,
                capsule: blend(&t.capsule, config.tmj.q_capsule)?,
                condyle_field: (&fc).into(),
                fossa_field: (&ff).into(),
            })
        }
    };

    Ok(PatientParameters {
        tables_version: AnatomyTables::builtin().version.clone(),
        rigid,
        mandible_field: (&mandible).into(),
        maxilla_field: (&maxilla).into(),
        landmarks,
        muscles,
        ligaments,
        tmj_params: config.tmj,
        tmj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(rng: &mut impl Rng, c: Point3, r: Vec3, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|_| c + Vec3::new(rng.random_range(-r.x..r.x), rng.random_range(-r.y..r.y), rng.random_range(-r.z..r.z)))
            .collect()
    }

    fn input(shift: Vec3) -> PersonalizationInput {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mandible = blob(&mut rng, Point3::new(0.0, 0.0, -40.0), Vec3::new(45.0, 30.0, 10.0), 120);
        let maxilla = blob(&mut rng, Point3::new(0.0, 10.0, 0.0), Vec3::new(30.0, 25.0, 8.0), 120);
        let moved = |pts: &[Point3]| pts.iter().map(|p| p + shift).collect::<Vec<_>>();
        let lm = |name: &str, support, p: Point3| Landmark { name: name.into(), support, position: p };
        let landmarks = vec![
            lm("rsm_o", Support::Maxilla, maxilla[0]),
            lm("rsm_i", Support::Mandible, mandible[0]),
            lm("rdm_o", Support::Maxilla, maxilla[1]),
            lm("rdm_i", Support::Mandible, mandible[1]),
            lm("m2", Support::Mandible, mandible[2]),
            lm("hy", Support::Hyoid, Point3::new(0.0, -20.0, -70.0)),
        ];
        let mut scs = BTreeMap::new();
        scs.insert("R".to_string(), BTreeMap::from([("masseter".to_string(), 10.0)]));
        PersonalizationInput {
            mandible: PairedClouds { patient: moved(&mandible), template: mandible },
            maxilla: PairedClouds { patient: moved(&maxilla), template: maxilla },
            landmarks,
            muscles: vec![
                MuscleSpec { muscle: "RSM".into(), origin: "rsm_o".into(), insertion: "rsm_i".into(), f_max: 100.0 },
                MuscleSpec { muscle: "RDM".into(), origin: "rdm_o".into(), insertion: "rdm_i".into(), f_max: 50.0 },
                MuscleSpec { muscle: "RAD".into(), origin: "m2".into(), insertion: "hy".into(), f_max: 20.0 },
            ],
            ligaments: vec![LigamentSpec { name: "r_stm".into(), group: "stm".into(), from: "rsm_o".into(), to: "m2".into() }],
            scs,
            tmj: None,
        }
    }

    #[test]
    fn rigidly_moved_patient_preserves_lengths() {
        let shift = Vec3::new(4.0, -3.0, 2.0);
        let inp = input(shift);
        let out = personalize(&inp, &PersonalizationConfig::default()).unwrap();
        assert!((out.rigid.translation - shift).norm() < 1e-6);
        let rsm = &out.muscles["RSM"];
        let template_len = (inp.landmarks[1].position - inp.landmarks[0].position).norm();
        assert!((rsm.l_opt - template_len).abs() < 1e-6);
        assert!((rsm.l_max / rsm.l_opt - 1.30).abs() < 1e-12);
        assert!((rsm.f_max - 394.66).abs() < 1e-9);
        assert!((out.muscles["RDM"].f_max - 169.14).abs() < 1e-9);
        assert_eq!(out.muscles["RAD"].f_max, 20.0);
        assert!((out.landmarks["hy"] - (Point3::new(0.0, -20.0, -70.0) + shift)).norm() < 1e-6);
        assert!(out.ligaments["r_stm"].rest_length > 1.5);
        let json = serde_json::to_string(&out).unwrap();
        assert_eq!(serde_json::from_str::<PatientParameters>(&json).unwrap().muscles, out.muscles);
    }

    #[test]
    fn unknown_landmark_is_reported() {
        let mut inp = input(Vec3::zeros());
        inp.muscles[0].origin = "nowhere".into();
        assert!(matches!(personalize(&inp, &PersonalizationConfig::default()), Err(Error::Unknown { .. })));
    }
}
