use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use log::warn;
use serde::Serialize;
use serde_json::json;

use reconplan::analysis::{dice, sensitivity_run, splat_to_grid, SensitivityParam, SensitivitySpec, SensitivityTable, VoxelMask};
use reconplan::bo::{self, RunResult};
use reconplan::case::{load_case, load_registration, load_run_config, CaseBundle, EvaluatorSpec, RunConfig};
use reconplan::design::DesignVector;
use reconplan::evaluator::SyntheticEvaluator;
use reconplan::geometry::io::{read_mesh, read_points_csv};
use reconplan::objective::{Objective, ObjectiveWeights};
use reconplan::registration::{
    extract_scs, max_force, pcsa_estimate, personalize, reference_plane, PersonalizationConfig, ScsLandmarks, ScsProtocol,
};

use crate::manifest::{sha256_hex, RunManifest};
use crate::output;
use crate::{EvaluateArgs, OptimizeArgs, PcsaArgs, RegisterArgs, ReportArgs, SensitivityArgs, ValidateArgs};

/// Stdout writes that tolerate a closed pipe.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

fn say_raw(text: &str) {
    use std::io::Write as _;
    let _ = std::io::stdout().write_all(text.as_bytes());
}

/// Usage errors (bad flags, missing or invalid inputs) exit with 2, failures
/// during computation with 1.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => e,
        }
    }
}

/// Joins the error chain, skipping causes already quoted by their parent.
pub fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut prev = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !prev.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
        prev = msg;
    }
    out
}

trait Classify<T> {
    fn usage(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

/// Output directory plus the manifest describing it.
struct Session {
    dir: Option<PathBuf>,
    manifest: RunManifest,
}

impl Session {
    fn open(command: &str, args: Vec<String>, dir: Option<PathBuf>) -> Result<Self, Failure> {
        if let Some(d) = &dir {
            fs::create_dir_all(d).with_context(|| format!("creating {}", d.display())).usage()?;
        }
        Ok(Self { dir, manifest: RunManifest::begin(command, args) })
    }

    fn set_config<T: Serialize>(&mut self, config: &T) -> Result<(), Failure> {
        let bytes = serde_json::to_vec(config).runtime()?;
        self.manifest.config_hash = Some(sha256_hex(&bytes));
        Ok(())
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), Failure> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join(name);
        output::write(&path, text).runtime()?;
        self.manifest.record_output(&path).runtime()
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).runtime()?;
        text.push('\n');
        self.write(name, &text)
    }

    fn close(self, result: Result<(), Failure>) -> Result<(), Failure> {
        if let Some(dir) = &self.dir {
            let (code, msg) = match &result {
                Ok(()) => (0, None),
                Err(f) => (i32::from(f.code()), Some(describe(f.error()))),
            };
            self.manifest.finish(dir, code, msg).runtime()?;
        }
        result
    }
}

fn load_case_usage(path: &Path) -> Result<CaseBundle, Failure> {
    load_case(path).with_context(|| format!("loading case {}", path.display())).usage()
}

fn parse_objective(s: &str) -> Result<Objective, Failure> {
    s.parse::<Objective>().usage()
}

pub fn optimize(a: OptimizeArgs, args: Vec<String>) -> Result<(), Failure> {
    let mut cfg = match (&a.config, &a.case) {
        (Some(p), _) => load_run_config(p).with_context(|| format!("loading {}", p.display())).usage()?,
        (None, Some(c)) => RunConfig::for_case(c.clone()),
        (None, None) => return Err(Failure::Usage(anyhow!("either --config or --case is required"))),
    };
    if let Some(o) = a.out {
        cfg.out = Some(o);
    }
    if let Some(s) = a.seeds {
        cfg.seeds = Some(s);
    }
    if let Some(o) = &a.objective {
        cfg.objective = parse_objective(o)?;
    }
    if let Some(n) = a.iterations {
        cfg.bo.n_iterations = n;
    }
    if let Some(n) = a.sobol {
        cfg.bo.n_sobol = n;
    }
    let out = cfg.out.clone().ok_or_else(|| Failure::Usage(anyhow!("an output directory is required (--out)")))?;
    let case = load_case_usage(&cfg.case)?;
    cfg.validate().usage()?;
    let spec = cfg.evaluator.clone().unwrap_or_else(|| case.evaluator.clone());
    let evaluator = case.build_evaluator_with(&spec).usage()?;
    let bo_config = cfg.effective_bo();

    let mut s = Session::open("optimize", args, Some(out))?;
    let r = optimize_body(&mut s, &case, &spec, &cfg, &bo_config, evaluator.as_ref());
    s.close(r)
}

fn optimize_body(
    s: &mut Session,
    case: &CaseBundle,
    spec: &EvaluatorSpec,
    cfg: &RunConfig,
    bo_config: &bo::BoConfig,
    evaluator: &dyn reconplan::evaluator::Evaluator,
) -> Result<(), Failure> {
    let resolved = json!({
        "case": case,
        "evaluator": spec,
        "objective": cfg.objective,
        "bo": bo_config,
        "weights": cfg.weights,
    });
    s.set_config(&resolved)?;
    s.write_json("config.json", &resolved)?;

    let result = bo::run(evaluator, cfg.objective, &cfg.weights, bo_config).runtime()?;
    say!("seed,best_score,evaluation,{}", reconplan::design::COMPONENT_NAMES[..case.bounds.dims()].join(","));
    for t in &result.traces {
        s.write(&format!("trace_seed{}.csv", t.seed), &output::trace_csv(t))?;
        if let Some(e) = &t.error {
            warn!("seed {} stopped early: {e}", t.seed);
        }
        if let Some(b) = t.best() {
            let phi: Vec<String> = b.phi.iter().map(|v| output::num(*v)).collect();
            say!("{},{},{},{}", t.seed, output::num(-b.y), b.index, phi.join(","));
        }
    }
    s.write("convergence.csv", &output::convergence_csv(&result.summary))?;
    s.write_json("result.json", &result)?;
    let mut case_copy = case.clone();
    case_copy.evaluator = spec.clone();
    case_copy.registration = None;
    let text = serde_json::to_string_pretty(&case_copy).runtime()?;
    s.write("case.json", &(text + "\n"))?;
    if result.traces.iter().all(|t| t.error.is_some()) {
        let first = result.traces.first().and_then(|t| t.error.clone()).unwrap_or_default();
        return Err(Failure::Runtime(anyhow!("every seed failed; first error: {first}")));
    }
    Ok(())
}

fn parse_design(values: &[f64], case: &CaseBundle) -> Result<DesignVector, Failure> {
    let phi = DesignVector::from_slice(values).usage()?;
    case.bounds.ensure_contains(&phi).usage()?;
    Ok(phi)
}

pub fn evaluate(a: EvaluateArgs, args: Vec<String>) -> Result<(), Failure> {
    let case = load_case_usage(&a.case)?;
    let phi = parse_design(&a.phi, &case)?;
    let evaluator = case.build_evaluator().usage()?;
    let mut s = Session::open("evaluate", args, a.out)?;
    let r = (|| {
        s.set_config(&json!({"case": case, "phi": phi.to_vec()}))?;
        let result = evaluator.evaluate(&phi).runtime()?;
        let averages = result.averages().runtime()?;
        let w = ObjectiveWeights::default();
        let mut text = String::from("interface,cycle_average\n");
        for (name, v) in ["left", "right", "middle"].iter().zip(&averages) {
            let _ = writeln!(text, "{name},{}", output::num(*v));
        }
        let _ = writeln!(text, "fopt,{}", output::num(result.score(Objective::Fopt, &w).runtime()?));
        let _ = writeln!(text, "fsf,{}", output::num(result.score(Objective::Fsf, &w).runtime()?));
        say_raw(&text);
        s.write("summary.csv", &text)?;
        s.write_json("evaluation.json", &result)?;
        s.write("apposition.csv", &output::apposition_csv(&result))?;
        Ok(())
    })();
    s.close(r)
}

pub fn register(a: RegisterArgs, args: Vec<String>) -> Result<(), Failure> {
    let input = load_registration(&a.bundle).with_context(|| format!("loading {}", a.bundle.display())).usage()?;
    let config: PersonalizationConfig = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).usage()?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display())).usage()?
        }
        None => PersonalizationConfig::default(),
    };
    let mut s = Session::open("register", args, Some(a.out))?;
    let r = (|| {
        s.set_config(&json!({"input": input, "config": config}))?;
        let params = personalize(&input, &config).runtime()?;
        say!("muscle,l_opt,l_max,f_max");
        for (name, m) in &params.muscles {
            say!("{name},{},{},{}", output::num(m.l_opt), output::num(m.l_max), output::num(m.f_max));
        }
        s.write_json("patient_parameters.json", &params)
    })();
    s.close(r)
}

pub fn pcsa(a: PcsaArgs, args: Vec<String>) -> Result<(), Failure> {
    let (scs, plane_offset) = match (a.scs, &a.mesh, &a.landmarks) {
        (Some(v), _, _) => (v, None),
        (None, Some(mesh), Some(lm)) => {
            let mesh = read_mesh(mesh).usage()?;
            let text = fs::read_to_string(lm).with_context(|| format!("reading {}", lm.display())).usage()?;
            let landmarks: ScsLandmarks = serde_json::from_str(&text).with_context(|| format!("parsing {}", lm.display())).usage()?;
            let protocol = ScsProtocol::default();
            let plane = reference_plane(&a.group, &landmarks, &protocol).usage()?;
            let r = extract_scs(&mesh, &plane, &protocol).runtime()?;
            (r.area_cm2, Some(r.offset_mm))
        }
        _ => return Err(Failure::Usage(anyhow!("either --scs or --mesh with --landmarks is required"))),
    };
    let estimate = pcsa_estimate(scs, &a.group).usage()?;
    let force = max_force(estimate.mean, &a.group).runtime()?;
    let report = json!({
        "group": a.group,
        "scs_cm2": scs,
        "scs_plane_offset_mm": plane_offset,
        "pcsa": estimate,
        "max_force": force,
    });
    let mut s = Session::open("pcsa", args, a.out)?;
    let r = (|| {
        s.set_config(&json!({"group": a.group, "scs": scs}))?;
        say!("{}", serde_json::to_string_pretty(&report).runtime()?);
        s.write_json("pcsa.json", &report)
    })();
    s.close(r)
}

fn baseline_phi(spec: &str, case: &CaseBundle) -> Result<DesignVector, Failure> {
    match spec {
        "zero" => Ok(DesignVector::baseline(case.bounds.segment_count())),
        "phi-star" => {
            let config = case.synthetic_config().cloned().ok_or_else(|| Failure::Usage(anyhow!("phi-star needs the synthetic evaluator")))?;
            Ok(*SyntheticEvaluator::new(case.bounds, config).usage()?.phi_star())
        }
        list => {
            let values: Vec<f64> = list
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .with_context(|| format!("bad baseline `{list}`"))
                .usage()?;
            parse_design(&values, case)
        }
    }
}

pub fn sensitivity(a: SensitivityArgs, args: Vec<String>) -> Result<(), Failure> {
    let mut spec = SensitivitySpec::default();
    if let Some(p) = a.perturbation {
        spec.perturbation = p;
    }
    if let Some(n) = a.repeats {
        spec.repeats = n;
    }
    if let Some(names) = &a.parameters {
        spec.parameters = names.iter().map(|n| n.parse::<SensitivityParam>()).collect::<Result<_, _>>().usage()?;
    }
    spec.validate().usage()?;
    let mut jobs = Vec::new();
    for path in &a.case {
        let case = load_case_usage(path)?;
        let Some(config) = case.synthetic_config().cloned() else {
            return Err(Failure::Usage(anyhow!("{}: sensitivity runs need the synthetic evaluator", path.display())));
        };
        let phi = baseline_phi(&a.baseline, &case)?;
        jobs.push((case, config, phi));
    }
    let mut s = Session::open("sensitivity", args, a.out)?;
    let r = (|| {
        let cfg: Vec<_> = jobs.iter().map(|(c, _, phi)| json!({"case": c, "phi": phi.to_vec()})).collect();
        s.set_config(&json!({"spec": spec, "cases": cfg}))?;
        let w = ObjectiveWeights::default();
        let mut tables: Vec<(String, SensitivityTable)> = Vec::new();
        for (case, config, phi) in &jobs {
            let t = sensitivity_run(&case.bounds, config, &spec, phi, &w).with_context(|| format!("case {}", case.name)).runtime()?;
            tables.push((case.name.clone(), t));
        }
        let csv = output::sensitivity_csv(&tables);
        say_raw(&csv);
        let evaluations: usize = tables.iter().map(|(_, t)| t.evaluations()).sum();
        let failures: usize = tables.iter().flat_map(|(_, t)| &t.rows).map(|r| r.errors.len()).sum();
        eprintln!("{evaluations} evaluations, {failures} failed");
        s.write("sensitivity.csv", &csv)?;
        let by_case: serde_json::Map<String, serde_json::Value> =
            tables.iter().map(|(n, t)| (n.clone(), serde_json::to_value(t).unwrap_or_default())).collect();
        s.write_json("sensitivity.json", &json!({"evaluations": evaluations, "failures": failures, "cases": by_case}))
    })();
    s.close(r)
}

fn split_side(arg: &str, k: usize) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((side, path)) if !side.is_empty() && !side.contains(['/', '\\']) => (side.to_string(), PathBuf::from(path)),
        _ => (if k == 0 { "all".to_string() } else { format!("side{k}") }, PathBuf::from(arg)),
    }
}

pub fn validate(a: ValidateArgs, args: Vec<String>) -> Result<(), Failure> {
    if a.predicted.len() != a.observed.len() {
        return Err(Failure::Usage(anyhow!("--predicted-mask and --observed-mask must be given the same number of times")));
    }
    if !(a.sigma > 0.0) {
        return Err(Failure::Usage(anyhow!("--sigma must be positive")));
    }
    let mut pairs = Vec::new();
    for (k, (p, o)) in a.predicted.iter().zip(&a.observed).enumerate() {
        let (side_p, pred) = split_side(p, k);
        let (side_o, obs) = split_side(o, k);
        if side_p != side_o {
            return Err(Failure::Usage(anyhow!("side labels differ: `{side_p}` vs `{side_o}`")));
        }
        let observed = VoxelMask::read(&obs).usage()?;
        let predicted = if pred.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            let points = read_points_csv(&pred).usage()?;
            splat_to_grid(&points, &observed.grid, a.sigma, a.threshold).runtime()?
        } else {
            VoxelMask::read(&pred).usage()?
        };
        pairs.push((side_p, predicted, observed));
    }
    let mut s = Session::open("validate", args, a.out)?;
    let r = (|| {
        s.set_config(&json!({"predicted": a.predicted, "observed": a.observed, "sigma": a.sigma, "threshold": a.threshold}))?;
        let mut text = String::from("side,dice,predicted_voxels,observed_voxels\n");
        for (side, p, o) in &pairs {
            let d = dice(p, o).runtime()?;
            let _ = writeln!(text, "{side},{},{},{}", output::num(d), p.count(), o.count());
        }
        say_raw(&text);
        s.write("validation.csv", &text)
    })();
    s.close(r)
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    best_score: f64,
    evaluation: usize,
    phi: Vec<f64>,
    error: Option<String>,
}

pub fn report(a: ReportArgs, args: Vec<String>) -> Result<(), Failure> {
    let result_path = a.run.join("result.json");
    let text = fs::read_to_string(&result_path).with_context(|| format!("reading {}", result_path.display())).usage()?;
    let result: RunResult = serde_json::from_str(&text).with_context(|| format!("parsing {}", result_path.display())).usage()?;
    let case = load_case_usage(&a.run.join("case.json"))?;
    let out = a.out.unwrap_or_else(|| a.run.join("report"));
    let mut s = Session::open("report", args, Some(out))?;
    let r = (|| {
        s.set_config(&json!({"result_sha256": sha256_hex(text.as_bytes())}))?;
        let w = ObjectiveWeights::default();
        let seeds: Vec<SeedSummary> = result
            .traces
            .iter()
            .filter_map(|t| {
                t.best().map(|b| SeedSummary { seed: t.seed, best_score: -b.y, evaluation: b.index, phi: b.phi.clone(), error: t.error.clone() })
            })
            .collect();
        if seeds.is_empty() {
            return Err(Failure::Runtime(anyhow!("run contains no evaluations")));
        }
        let mut scores: Vec<f64> = seeds.iter().map(|x| x.best_score).collect();
        scores.sort_by(f64::total_cmp);
        let median = if scores.len() % 2 == 1 {
            scores[scores.len() / 2]
        } else {
            0.5 * (scores[scores.len() / 2 - 1] + scores[scores.len() / 2])
        };
        let evaluator = case.build_evaluator().usage()?;
        let baseline = DesignVector::baseline(case.bounds.segment_count());
        let baseline_score = match evaluator.evaluate(&baseline).and_then(|r| r.score(result.objective, &w)) {
            Ok(v) => Some(v),
            Err(e) => {
                warn!("baseline evaluation failed: {e}");
                None
            }
        };
        let best = seeds.iter().fold(&seeds[0], |acc, x| if x.best_score > acc.best_score { x } else { acc });
        let best_eval = evaluator.evaluate(&DesignVector::from_slice(&best.phi).runtime()?).runtime()?;
        Ok((seeds_json(&seeds, median, baseline_score, result.objective), best_eval))
    })();
    let r = r.and_then(|(report, best_eval)| {
        s.write_json("report.json", &report)?;
        s.write("best_apposition.csv", &output::apposition_csv(&best_eval))?;
        s.write("convergence.csv", &output::convergence_csv(&result.summary))?;
        say!("{}", serde_json::to_string_pretty(&report).runtime()?);
        Ok(())
    });
    s.close(r)
}

fn seeds_json(seeds: &[SeedSummary], median: f64, baseline: Option<f64>, objective: Objective) -> serde_json::Value {
    json!({
        "objective": objective,
        "seeds": seeds,
        "median_best_score": median,
        "baseline_score": baseline,
        "improvement_over_baseline": baseline.map(|b| median - b),
    })
}
