use std::fs;
use std::path::{Path, PathBuf};

use reconplan::analysis::{dice, sensitivity_run, splat_to_grid, GridSpec, SensitivitySpec, VoxelMask};
use reconplan::bo::{run, BoConfig};
use reconplan::case::{load_case, load_registration, save_case};
use reconplan::design::DesignVector;
use reconplan::geometry::Point3;
use reconplan::objective::{Objective, ObjectiveWeights};
use reconplan::registration::{personalize, PersonalizationConfig};

const CASES: [&str; 6] = ["generic1", "generic2", "generic3", "patient1", "patient2", "patient3"];

fn case_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../data/cases/{name}.json"))
}

#[test]
fn shipped_cases_evaluate_at_baseline() {
    let w = ObjectiveWeights::default();
    for name in CASES {
        let case = load_case(&case_path(name)).unwrap();
        let ev = case.build_evaluator().unwrap();
        let phi = DesignVector::baseline(case.region().segment_count());
        let r = ev.evaluate(&phi).unwrap();
        let averages = r.averages().unwrap();
        assert!(averages.iter().all(|a| (0.0..=1.0).contains(a)), "{name}: {averages:?}");
        let fopt = r.score(Objective::Fopt, &w).unwrap();
        let fsf = r.score(Objective::Fsf, &w).unwrap();
        assert!(fsf <= fopt, "{name}");
    }
}

#[test]
fn case_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let case = load_case(&case_path("patient3")).unwrap();
    let path = dir.path().join("copy.json");
    save_case(&path, &case).unwrap();
    assert_eq!(load_case(&path).unwrap(), case);
}

#[test]
fn short_optimization_is_deterministic() {
    let case = load_case(&case_path("generic2")).unwrap();
    let ev = case.build_evaluator().unwrap();
    let config = BoConfig { n_sobol: 8, n_iterations: 4, seeds: vec![3, 11], candidates: 500, ..BoConfig::default() };
    let w = ObjectiveWeights::default();
    let a = run(ev.as_ref(), Objective::Fopt, &w, &config).unwrap();
    let b = run(ev.as_ref(), Objective::Fopt, &w, &config).unwrap();
    assert_eq!(a, b);
    for t in &a.traces {
        assert!(t.error.is_none());
        assert_eq!(t.records.len(), 12);
        let curve = t.best_so_far();
        assert!(curve.windows(2).all(|w| w[1] <= w[0]));
    }
    assert_eq!(a.summary.mean.len(), 12);
}

#[test]
fn sensitivity_over_one_case() {
    let case = load_case(&case_path("generic1")).unwrap();
    let config = case.synthetic_config().unwrap();
    let phi = DesignVector::baseline(case.region().segment_count());
    let spec = SensitivitySpec { repeats: 2, ..SensitivitySpec::default() };
    let table = sensitivity_run(case.region(), config, &spec, &phi, &ObjectiveWeights::default()).unwrap();
    assert_eq!(table.rows.len(), 22);
    assert_eq!(table.evaluations(), 44);
    assert!(table.rows.iter().all(|r| r.errors.is_empty() && r.mean.is_some()));
}

fn cloud(offset: [f64; 3], n: usize) -> Vec<Point3> {
    let a = [0.754_877_666_246_692_7, 0.569_840_290_998_053_3, 0.438_768_583_221_396_9];
    (0..n)
        .map(|i| {
            let t = i as f64 + 1.0;
            Point3::new(offset[0] + 40.0 * (t * a[0]).fract(), offset[1] + 25.0 * (t * a[1]).fract(), offset[2] + 10.0 * (t * a[2]).fract())
        })
        .collect()
}

#[test]
fn registration_bundle_to_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let shift = [2.0, -1.0, 0.5];
    let moved = |pts: &[Point3]| pts.iter().map(|p| [p.x + shift[0], p.y + shift[1], p.z + shift[2]]).collect::<Vec<_>>();
    let raw = |pts: &[Point3]| pts.iter().map(|p| [p.x, p.y, p.z]).collect::<Vec<_>>();
    let mandible = cloud([0.0, 0.0, -30.0], 150);
    let maxilla = cloud([0.0, 5.0, 0.0], 150);
    let bundle = serde_json::json!({
        "mandible": {"template": raw(&mandible), "patient": moved(&mandible)},
        "maxilla": {"template": raw(&maxilla), "patient": moved(&maxilla)},
        "landmarks": [
            {"name": "origin", "support": "maxilla", "position": [maxilla[3].x, maxilla[3].y, maxilla[3].z]},
            {"name": "insertion", "support": "mandible", "position": [mandible[7].x, mandible[7].y, mandible[7].z]},
        ],
        "muscles": [{"muscle": "LDM", "origin": "origin", "insertion": "insertion", "f_max": 50.0}],
    });
    let path = dir.path().join("bundle.json");
    fs::write(&path, bundle.to_string()).unwrap();
    let input = load_registration(&path).unwrap();
    let params = personalize(&input, &PersonalizationConfig::default()).unwrap();
    for k in 0..3 {
        assert!((params.rigid.translation[k] - shift[k]).abs() < 1e-6);
    }
    let moved_insertion = params.landmarks["insertion"];
    assert!((moved_insertion - (mandible[7] + nalgebra::Vector3::from(shift))).norm() < 1e-6);
    assert!(params.muscles.contains_key("LDM"));
}

#[test]
fn splatted_prediction_against_written_mask() {
    let dir = tempfile::tempdir().unwrap();
    let grid = GridSpec { dims: [12, 12, 12], spacing: [1.0; 3], origin: [0.0; 3] };
    let points = vec![Point3::new(4.0, 4.0, 4.0), Point3::new(7.0, 6.0, 5.0)];
    let predicted = splat_to_grid(&points, &grid, 1.0, 0.5).unwrap();
    assert!(predicted.count() > 0);
    let header = dir.path().join("observed.json");
    predicted.write(&header).unwrap();
    let observed = VoxelMask::read(&header).unwrap();
    assert_eq!(dice(&predicted, &observed).unwrap(), 1.0);
    let empty = VoxelMask::zeros(grid).unwrap();
    assert_eq!(dice(&predicted, &empty).unwrap(), 0.0);
}
