use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_reconplan"))
}

fn cases() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/cases")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn reconplan")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn evaluate_baseline_prints_cycle_averages() {
    let case = cases().join("generic1.json");
    let o = run(&["evaluate", "--phi", "0,0,0,0,0", "--case", case.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "interface,cycle_average");
    assert!(lines[1].starts_with("left,"));
    assert!(lines[2].starts_with("right,"));
    let left: f64 = lines[1][5..].parse().unwrap();
    assert!((0.0..=1.0).contains(&left));
}

#[test]
fn evaluate_rejects_bad_inputs() {
    let o = run(&["evaluate", "--phi", "0,0,0,0,0", "--case", "/nonexistent/case.json"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["evaluate", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let case = cases().join("generic1.json");
    let o = run(&["evaluate", "--phi", "90,0,0,0,0", "--case", case.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["evaluate", "--phi", "0,0,0,0,0,0", "--case", case.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_cases_all_load() {
    for name in ["generic1", "generic2", "generic3", "patient1", "patient2", "patient3"] {
        let case = reconplan::case::load_case(&cases().join(format!("{name}.json"))).unwrap();
        assert_eq!(case.name, name);
    }
}

#[test]
fn optimize_writes_traces_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let case = cases().join("generic2.json");
    let o = run(&[
        "optimize", "--case", case.to_str().unwrap(), "--out", out.to_str().unwrap(),
        "--seeds", "3,4", "--sobol", "6", "--iterations", "2", "--threads", "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trace_seed3.csv", "trace_seed4.csv", "convergence.csv", "result.json", "case.json", "config.json", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let trace = fs::read_to_string(out.join("trace_seed3.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 6 + 2);
    assert!(trace.lines().nth(7).unwrap().contains(",acquisition,"));

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["exit_status"], 0);
    assert_eq!(manifest["command"], "optimize");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["outputs"]["trace_seed4.csv"].is_string());

    let o = run(&["report", "--run", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report/report.json")).unwrap()).unwrap();
    assert_eq!(report["seeds"].as_array().unwrap().len(), 2);
    assert!(report["baseline_score"].is_number());
    assert!(out.join("report/best_apposition.csv").is_file());
}

#[test]
fn optimize_config_file_and_missing_out() {
    let dir = tempfile::tempdir().unwrap();
    let case = cases().join("generic1.json");
    let o = run(&["optimize", "--case", case.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let cfg = dir.path().join("run.json");
    let body = serde_json::json!({
        "case": case,
        "out": "res",
        "seeds": [1],
        "bo": {"n_sobol": 5, "n_iterations": 1, "candidates": 200},
    });
    fs::write(&cfg, body.to_string()).unwrap();
    let o = run(&["optimize", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("res/trace_seed1.csv").is_file());

    fs::write(&cfg, r#"{"case": "missing.json", "out": "res"}"#).unwrap();
    let o = run(&["optimize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pcsa_masseter_example() {
    let o = run(&["pcsa", "--group", "masseter", "--scs", "10"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["pcsa"]["mean"].as_f64().unwrap() - 14.095).abs() < 1e-9);
    assert!((v["max_force"]["total"].as_f64().unwrap() - 563.8).abs() < 1e-9);
    let o = run(&["pcsa", "--group", "buccinator", "--scs", "10"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sensitivity_counts_cells() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sens");
    let c1 = cases().join("patient1.json");
    let c2 = cases().join("patient3.json");
    let o = run(&[
        "sensitivity", "--case", c1.to_str().unwrap(), "--case", c2.to_str().unwrap(),
        "--baseline", "phi-star", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("sensitivity.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 22);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("sensitivity.json")).unwrap()).unwrap();
    assert_eq!(summary["evaluations"], 220);

    let o = run(&["sensitivity", "--case", c1.to_str().unwrap(), "--parameters", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}

fn write_mask(path: &Path, dims: [usize; 3], on: &[usize]) {
    let n = dims[0] * dims[1] * dims[2];
    let mut data = vec![0u8; n];
    for &i in on {
        data[i] = 1;
    }
    let raw = path.with_extension("raw");
    fs::write(&raw, &data).unwrap();
    let header = serde_json::json!({
        "dims": dims, "spacing": [1.0, 1.0, 1.0], "origin": [0.0, 0.0, 0.0],
        "data": raw.file_name().unwrap().to_str().unwrap(),
    });
    fs::write(path, header.to_string()).unwrap();
}

#[test]
fn validate_reports_dice_per_side() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_mask(&d.join("pl.json"), [4, 4, 4], &(0..20).collect::<Vec<_>>());
    write_mask(&d.join("ol.json"), [4, 4, 4], &(10..30).collect::<Vec<_>>());
    write_mask(&d.join("pr.json"), [4, 4, 4], &[1, 2, 3]);
    write_mask(&d.join("or.json"), [4, 4, 4], &[1, 2, 3]);
    let arg = |side: &str, f: &str| format!("{side}={}", d.join(f).display());
    let o = bin()
        .args(["validate", "--predicted-mask", &arg("left", "pl.json"), "--observed-mask", &arg("left", "ol.json")])
        .args(["--predicted-mask", &arg("right", "pr.json"), "--observed-mask", &arg("right", "or.json")])
        .args(["--out", d.join("v").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("left,5.0000000000000000e-1,20,20"), "{text}");
    assert!(text.contains("right,1.0000000000000000e0,3,3"), "{text}");
    assert!(d.join("v/manifest.json").is_file());

    write_mask(&d.join("small.json"), [2, 2, 2], &[0]);
    let o = run(&["validate", "--predicted-mask", d.join("small.json").to_str().unwrap(), "--observed-mask", d.join("ol.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

fn cloud(seed: u64, center: [f64; 3], half: [f64; 3], n: usize) -> Vec<[f64; 3]> {
    // Weyl sequence with irrational strides.
    let a = [0.754_877_666_246_692_7, 0.569_840_290_998_053_3, 0.438_768_583_221_396_9];
    (0..n)
        .map(|i| {
            let t = (i as u64 + seed * 1000) as f64;
            std::array::from_fn(|k| center[k] + half[k] * (2.0 * (t * a[k]).fract() - 1.0))
        })
        .collect()
}

#[test]
fn register_rigidly_shifted_patient() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let shift = [3.0, -2.0, 1.5];
    let moved = |pts: &[[f64; 3]]| pts.iter().map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]]).collect::<Vec<_>>();
    let mandible = cloud(1, [0.0, 0.0, -40.0], [45.0, 30.0, 10.0], 150);
    let maxilla = cloud(2, [0.0, 10.0, 0.0], [30.0, 25.0, 8.0], 150);
    let csv = |pts: &[[f64; 3]]| pts.iter().map(|p| format!("{},{},{}\n", p[0], p[1], p[2])).collect::<String>();
    fs::write(d.join("mand_t.csv"), csv(&mandible)).unwrap();
    fs::write(d.join("mand_p.csv"), csv(&moved(&mandible))).unwrap();
    let bundle = serde_json::json!({
        "mandible": {"template": "mand_t.csv", "patient": "mand_p.csv"},
        "maxilla": {"template": maxilla, "patient": moved(&maxilla)},
        "landmarks": [
            {"name": "o", "support": "maxilla", "position": maxilla[0]},
            {"name": "i", "support": "mandible", "position": mandible[0]},
        ],
        "muscles": [{"muscle": "RSM", "origin": "o", "insertion": "i", "f_max": 100.0}],
        "scs": {"R": {"masseter": 10.0}},
    });
    fs::write(d.join("bundle.json"), bundle.to_string()).unwrap();
    let out = d.join("reg");
    let o = run(&["register", "--bundle", d.join("bundle.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("patient_parameters.json")).unwrap()).unwrap();
    assert!((p["muscles"]["RSM"]["f_max"].as_f64().unwrap() - 394.66).abs() < 1e-9);
    let t = p["rigid"]["translation"].as_array().unwrap();
    for k in 0..3 {
        assert!((t[k].as_f64().unwrap() - shift[k]).abs() < 1e-6, "{t:?}");
    }

    let o = run(&["register", "--bundle", d.join("missing.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
