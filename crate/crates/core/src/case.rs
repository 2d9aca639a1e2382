//! Case bundles and run configurations.
//!
//! A case file is JSON:
//!
//! ```json
//! {
//!   "name": "generic1",
//!   "defect_class": "B",
//!   "bounds": {"alpha_r": 25, "alpha_p": 25, "beta_r": 20, "beta_p": 20, "z": 3.5},
//!   "evaluator": {"synthetic": {"cortical_hu": 1600, "cancellous_hu": 350}},
//!   "registration": "patient_bundle.json"
//! }
//! ```
//!
//! `bounds.r` is required for `RB` cases and rejected otherwise. Relative
//! paths are resolved against the directory of the file that names them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bo::BoConfig;
use crate::design::{DefectClass, FeasibleRegion};
use crate::error::{Error, Result};
use crate::evaluator::{Evaluator, ExternalEvaluator, SyntheticEvaluator, SyntheticModelConfig};
use crate::geometry::io::{read_mesh, read_named_points_csv, read_points_csv};
use crate::geometry::Point3;
use crate::objective::{Objective, ObjectiveWeights};
use crate::registration::{
    LigamentSpec, Landmark, MuscleSpec, PairedClouds, PersonalizationInput, Support, TmjInput,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum EvaluatorSpec {
    Synthetic(SyntheticModelConfig),
    External { command: Vec<String> },
}

impl Default for EvaluatorSpec {
    fn default() -> Self {
        EvaluatorSpec::Synthetic(SyntheticModelConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseBundle {
    pub name: String,
    pub defect_class: DefectClass,
    pub bounds: FeasibleRegion,
    #[serde(default)]
    pub evaluator: EvaluatorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registration: Option<PathBuf>,
}

impl CaseBundle {
    pub fn region(&self) -> &FeasibleRegion {
        &self.bounds
    }

    pub fn build_evaluator(&self) -> Result<Box<dyn Evaluator>> {
        self.build_evaluator_with(&self.evaluator)
    }

    pub fn build_evaluator_with(&self, spec: &EvaluatorSpec) -> Result<Box<dyn Evaluator>> {
        Ok(match spec {
            EvaluatorSpec::Synthetic(c) => Box::new(SyntheticEvaluator::new(self.bounds, c.clone())?),
            EvaluatorSpec::External { command } => Box::new(ExternalEvaluator::new(self.bounds, command)?),
        })
    }

    pub fn synthetic_config(&self) -> Option<&SyntheticModelConfig> {
        match &self.evaluator {
            EvaluatorSpec::Synthetic(c) => Some(c),
            EvaluatorSpec::External { .. } => None,
        }
    }

    /// Checks the bundle as a whole, reporting every problem found.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        check_case(self, &mut problems);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Schema { path: self.name.clone(), problems })
        }
    }
}

fn check_case(case: &CaseBundle, problems: &mut Vec<String>) {
    if case.name.trim().is_empty() {
        problems.push("name: must not be empty".into());
    }
    let b = &case.bounds;
    for (field, v) in [("alpha_r", b.alpha_r), ("alpha_p", b.alpha_p), ("beta_r", b.beta_r), ("beta_p", b.beta_p), ("z", b.z)] {
        if !(v > 0.0 && v.is_finite()) {
            problems.push(format!("bounds.{field}: must be positive, got {v}"));
        }
    }
    match (case.defect_class, b.r) {
        (DefectClass::RB, None) => problems.push("bounds.r: required for RB cases".into()),
        (DefectClass::RB, Some(r)) if !(r > 0.0 && r.is_finite()) => problems.push(format!("bounds.r: must be positive, got {r}")),
        (DefectClass::B | DefectClass::S, Some(_)) => problems.push("bounds.r: only allowed for RB cases".into()),
        _ => {}
    }
    match &case.evaluator {
        EvaluatorSpec::Synthetic(c) => match c.validate() {
            Err(Error::Schema { problems: p, .. }) => problems.extend(p.into_iter().map(|s| format!("evaluator.synthetic: {s}"))),
            Err(e) => problems.push(format!("evaluator.synthetic: {e}")),
            Ok(()) => {
                if problems.is_empty() {
                    if let Err(e) = SyntheticEvaluator::new(case.bounds, c.clone()) {
                        problems.push(format!("evaluator.synthetic: {e}"));
                    }
                }
            }
        },
        EvaluatorSpec::External { command } => {
            if command.is_empty() {
                problems.push("evaluator.external.command: must not be empty".into());
            }
        }
    }
}

const CASE_FIELDS: [&str; 5] = ["name", "defect_class", "bounds", "evaluator", "registration"];
const BOUND_FIELDS: [&str; 6] = ["alpha_r", "alpha_p", "beta_r", "beta_p", "z", "r"];

/// Structural checks on raw JSON so that every missing or mistyped field is
/// reported, not just the first one serde trips over.
fn check_raw_case(v: &Value, problems: &mut Vec<String>) {
    let Some(obj) = v.as_object() else {
        problems.push("top level: expected an object".into());
        return;
    };
    for key in obj.keys() {
        if !CASE_FIELDS.contains(&key.as_str()) {
            problems.push(format!("{key}: unknown field"));
        }
    }
    match obj.get("name") {
        Some(Value::String(_)) => {}
        Some(_) => problems.push("name: expected a string".into()),
        None => problems.push("name: missing".into()),
    }
    match obj.get("defect_class").map(|c| c.as_str()) {
        Some(Some("B" | "S" | "RB")) => {}
        Some(_) => problems.push("defect_class: expected one of B, S, RB".into()),
        None => problems.push("defect_class: missing".into()),
    }
    match obj.get("bounds") {
        Some(Value::Object(b)) => {
            for key in b.keys() {
                if !BOUND_FIELDS.contains(&key.as_str()) {
                    problems.push(format!("bounds.{key}: unknown field"));
                }
            }
            for field in &BOUND_FIELDS[..5] {
                match b.get(*field) {
                    Some(x) if x.is_number() => {}
                    Some(_) => problems.push(format!("bounds.{field}: expected a number")),
                    None => problems.push(format!("bounds.{field}: missing")),
                }
            }
            if let Some(r) = b.get("r") {
                if !r.is_number() && !r.is_null() {
                    problems.push("bounds.r: expected a number".into());
                }
            }
        }
        Some(_) => problems.push("bounds: expected an object".into()),
        None => problems.push("bounds: missing".into()),
    }
    if let Some(e) = obj.get("evaluator") {
        if let Err(err) = serde_json::from_value::<EvaluatorSpec>(e.clone()) {
            problems.push(format!("evaluator: {err}"));
        }
    }
    if let Some(r) = obj.get("registration") {
        if !r.is_string() && !r.is_null() {
            problems.push("registration: expected a path string".into());
        }
    }
}

pub fn parse_case(text: &str, origin: &str) -> Result<CaseBundle> {
    let raw: Value = serde_json::from_str(text)
        .map_err(|e| Error::Parse { path: origin.to_string(), line: e.line(), msg: e.to_string() })?;
    let mut problems = Vec::new();
    check_raw_case(&raw, &mut problems);
    if !problems.is_empty() {
        return Err(Error::Schema { path: origin.to_string(), problems });
    }
    let case: CaseBundle =
        serde_json::from_value(raw).map_err(|e| Error::Schema { path: origin.to_string(), problems: vec![e.to_string()] })?;
    check_case(&case, &mut problems);
    if !problems.is_empty() {
        return Err(Error::Schema { path: origin.to_string(), problems });
    }
    Ok(case)
}

/// Loads and validates a case; a relative `registration` path is made
/// relative to the case file's directory.
pub fn load_case(path: &Path) -> Result<CaseBundle> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut case = parse_case(&text, &path.display().to_string())?;
    if let Some(reg) = &case.registration {
        case.registration = Some(resolve(path, reg));
    }
    Ok(case)
}

pub fn save_case(path: &Path, case: &CaseBundle) -> Result<()> {
    case.validate()?;
    let mut text = serde_json::to_string_pretty(case)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn resolve(base_file: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_file.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Everything an `optimize` run needs besides the case itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub case: PathBuf,
    #[serde(default)]
    pub objective: Objective,
    #[serde(default)]
    pub bo: BoConfig,
    /// Replaces the case's evaluator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluator: Option<EvaluatorSpec>,
    #[serde(default)]
    pub weights: ObjectiveWeights,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Replaces `bo.seeds`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
}

impl RunConfig {
    pub fn for_case(case: PathBuf) -> Self {
        Self {
            case,
            objective: Objective::default(),
            bo: BoConfig::default(),
            evaluator: None,
            weights: ObjectiveWeights::default(),
            out: None,
            seeds: None,
        }
    }

    pub fn effective_bo(&self) -> BoConfig {
        let mut bo = self.bo.clone();
        if let Some(s) = &self.seeds {
            bo.seeds = s.clone();
        }
        bo
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !self.case.is_file() {
            problems.push(format!("case: file not found: {}", self.case.display()));
        }
        if let Err(e) = self.effective_bo().validate() {
            problems.push(format!("bo: {e}"));
        }
        if let Err(e) = self.weights.validate() {
            problems.push(format!("weights: {e}"));
        }
        if let Some(EvaluatorSpec::External { command }) = &self.evaluator {
            if command.is_empty() {
                problems.push("evaluator.external.command: must not be empty".into());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Schema { path: "run config".into(), problems })
        }
    }
}

/// Loads a run config; `case` and `out` are resolved against its directory.
pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Schema { path: path.display().to_string(), problems: vec![e.to_string()] })?;
    cfg.case = resolve(path, &cfg.case);
    cfg.out = cfg.out.as_deref().map(|o| resolve(path, o));
    cfg.validate()?;
    Ok(cfg)
}

/// A point cloud either inline or read from a file: `.csv` rows of `x,y,z`,
/// or the vertices of an `.obj`/`.ply` mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CloudSource {
    Inline(Vec<Point3>),
    File(PathBuf),
}

impl CloudSource {
    fn load(&self, base: &Path) -> Result<Vec<Point3>> {
        match self {
            CloudSource::Inline(v) => Ok(v.clone()),
            CloudSource::File(p) => {
                let p = resolve(base, p);
                match p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
                    Some("csv") => read_points_csv(&p),
                    _ => Ok(read_mesh(&p)?.vertices().to_vec()),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairedSource {
    pub template: CloudSource,
    pub patient: CloudSource,
}

impl PairedSource {
    fn load(&self, base: &Path) -> Result<PairedClouds> {
        Ok(PairedClouds { template: self.template.load(base)?, patient: self.patient.load(base)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TmjSource {
    pub condyle: PairedSource,
    pub fossa: PairedSource,
    pub disc: CloudSource,
    pub capsule: CloudSource,
}

/// Template landmarks: inline, or a `name,x,y,z` CSV plus a support map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LandmarkSource {
    Inline(Vec<Landmark>),
    File {
        file: PathBuf,
        /// Landmark name to support; unlisted names default to the mandible.
        #[serde(default)]
        support: BTreeMap<String, Support>,
    },
}

/// Registration inputs with geometry referenced by path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistrationBundle {
    pub mandible: PairedSource,
    pub maxilla: PairedSource,
    pub landmarks: LandmarkSource,
    pub muscles: Vec<MuscleSpec>,
    #[serde(default)]
    pub ligaments: Vec<LigamentSpec>,
    #[serde(default)]
    pub scs: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    pub tmj: Option<TmjSource>,
}

impl RegistrationBundle {
    pub fn resolve(&self, base_file: &Path) -> Result<PersonalizationInput> {
        let landmarks = match &self.landmarks {
            LandmarkSource::Inline(v) => v.clone(),
            LandmarkSource::File { file, support } => read_named_points_csv(&resolve(base_file, file))?
                .into_iter()
                .map(|(name, position)| {
                    let support = support.get(&name).copied().unwrap_or(Support::Mandible);
                    Landmark { name, support, position }
                })
                .collect(),
        };
        let tmj = match &self.tmj {
            None => None,
            Some(t) => Some(TmjInput {
                condyle: t.condyle.load(base_file)?,
                fossa: t.fossa.load(base_file)?,
                disc: t.disc.load(base_file)?,
                capsule: t.capsule.load(base_file)?,
            }),
        };
        Ok(PersonalizationInput {
            mandible: self.mandible.load(base_file)?,
            maxilla: self.maxilla.load(base_file)?,
            landmarks,
            muscles: self.muscles.clone(),
            ligaments: self.ligaments.clone(),
            scs: self.scs.clone(),
            tmj,
        })
    }
}

/// Reads a registration bundle and loads all referenced geometry.
pub fn load_registration(path: &Path) -> Result<PersonalizationInput> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bundle: RegistrationBundle = serde_json::from_str(&text)
        .map_err(|e| Error::Schema { path: path.display().to_string(), problems: vec![e.to_string()] })?;
    bundle.resolve(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::io::write_points_csv;

    const GENERIC1: &str = r#"{
        "name": "generic1",
        "defect_class": "B",
        "bounds": {"alpha_r": 25, "alpha_p": 25, "beta_r": 20, "beta_p": 20, "z": 3.5}
    }"#;

    fn problems(e: Error) -> Vec<String> {
        match e {
            Error::Schema { problems, .. } => problems,
            other => panic!("expected a schema error, got {other}"),
        }
    }

    #[test]
    fn parses_minimal_case_with_defaults() {
        let c = parse_case(GENERIC1, "inline").unwrap();
        assert_eq!(c.bounds.alpha_r, 25.0);
        assert_eq!(c.bounds.r, None);
        assert_eq!(c.evaluator, EvaluatorSpec::default());
        assert_eq!(c.build_evaluator().unwrap().region().dims(), 5);
    }

    #[test]
    fn rb_case_needs_r() {
        let text = GENERIC1.replace("\"B\"", "\"RB\"");
        let p = problems(parse_case(&text, "x").unwrap_err());
        assert_eq!(p, vec!["bounds.r: required for RB cases".to_string()]);

        let text = GENERIC1.replace("\"z\": 3.5", "\"z\": 3.5, \"r\": 7");
        let p = problems(parse_case(&text, "x").unwrap_err());
        assert_eq!(p, vec!["bounds.r: only allowed for RB cases".to_string()]);
    }

    #[test]
    fn reports_every_failed_field() {
        let text = r#"{"defect_class": "Q", "bounds": {"alpha_r": "25", "beta_r": 20, "beta_p": 20, "z": 3.5}, "colour": 1}"#;
        let p = problems(parse_case(text, "x").unwrap_err());
        for needle in ["colour: unknown field", "name: missing", "defect_class:", "bounds.alpha_r: expected a number", "bounds.alpha_p: missing"] {
            assert!(p.iter().any(|s| s.starts_with(needle)), "{needle} not in {p:?}");
        }
        assert_eq!(p.len(), 5);

        let text = GENERIC1.replace("\"alpha_r\": 25", "\"alpha_r\": -1").replace("\"z\": 3.5", "\"z\": 0");
        let p = problems(parse_case(&text, "x").unwrap_err());
        assert_eq!(p.len(), 2, "{p:?}");
    }

    #[test]
    fn synthetic_problems_are_prefixed() {
        let text = GENERIC1.replace("\"z\": 3.5}", "\"z\": 3.5}, \"evaluator\": {\"synthetic\": {\"steps\": 1, \"peak_gap\": -1}}");
        let p = problems(parse_case(&text, "x").unwrap_err());
        assert_eq!(p.len(), 2, "{p:?}");
        assert!(p.iter().all(|s| s.starts_with("evaluator.synthetic:")));
    }

    #[test]
    fn save_load_round_trip_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = SyntheticModelConfig::default();
        cfg.cortical_hu = 1400.0;
        cfg.cancellous_hu = 550.0;
        let case = CaseBundle {
            name: "patient3".into(),
            defect_class: DefectClass::RB,
            bounds: FeasibleRegion::new(25.0, 25.0, 25.0, 25.0, 5.0, Some(7.0)).unwrap(),
            evaluator: EvaluatorSpec::Synthetic(cfg),
            registration: None,
        };
        let path = dir.path().join("case.json");
        save_case(&path, &case).unwrap();
        let back = load_case(&path).unwrap();
        assert_eq!(back, case);
        let path2 = dir.path().join("case2.json");
        save_case(&path2, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn external_evaluator_spec() {
        let text = GENERIC1.replace("\"z\": 3.5}", "\"z\": 3.5}, \"evaluator\": {\"external\": {\"command\": [\"sim\", \"--fast\"]}}");
        let c = parse_case(&text, "x").unwrap();
        assert_eq!(c.evaluator, EvaluatorSpec::External { command: vec!["sim".into(), "--fast".into()] });
        assert!(c.synthetic_config().is_none());
        let text = GENERIC1.replace("\"z\": 3.5}", "\"z\": 3.5}, \"evaluator\": {\"external\": {\"command\": []}}");
        assert!(parse_case(&text, "x").is_err());
    }

    #[test]
    fn run_config_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("c.json"), GENERIC1).unwrap();
        let cfg_path = dir.path().join("run.json");
        fs::write(&cfg_path, r#"{"case": "c.json", "seeds": [3, 4], "out": "res"}"#).unwrap();
        let cfg = load_run_config(&cfg_path).unwrap();
        assert_eq!(cfg.case, dir.path().join("c.json"));
        assert_eq!(cfg.out, Some(dir.path().join("res")));
        assert_eq!(cfg.effective_bo().seeds, vec![3, 4]);
        load_case(&cfg.case).unwrap();

        fs::write(&cfg_path, r#"{"case": "missing.json"}"#).unwrap();
        assert!(matches!(load_run_config(&cfg_path), Err(Error::Schema { .. })));
        fs::write(&cfg_path, r#"{"case": "c.json", "bogus": 1}"#).unwrap();
        assert!(load_run_config(&cfg_path).is_err());
    }

    #[test]
    fn registration_bundle_reads_referenced_files() {
        let dir = tempfile::tempdir().unwrap();
        let pts: Vec<Point3> = (0..5).map(|i| Point3::new(i as f64, (i * i) as f64, 1.0)).collect();
        write_points_csv(&dir.path().join("m.csv"), &pts).unwrap();
        fs::write(dir.path().join("lm.csv"), "name,x,y,z\nGo,1,2,3\nHy,0,0,0\n").unwrap();
        let bundle = r#"{
            "mandible": {"template": "m.csv", "patient": "m.csv"},
            "maxilla": {"template": [[0,0,0],[1,0,0],[0,1,0]], "patient": "m.csv"},
            "landmarks": {"file": "lm.csv", "support": {"Hy": "hyoid"}},
            "muscles": []
        }"#;
        let path = dir.path().join("reg.json");
        fs::write(&path, bundle).unwrap();
        let input = load_registration(&path).unwrap();
        assert_eq!(input.mandible.template, pts);
        assert_eq!(input.maxilla.template.len(), 3);
        assert_eq!(input.landmarks[0].support, Support::Mandible);
        assert_eq!(input.landmarks[1].support, Support::Hyoid);
        assert_eq!(input.landmarks[0].position, Point3::new(1.0, 2.0, 3.0));
    }
}
