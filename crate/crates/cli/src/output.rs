//! CSV writers. Floats are printed with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use reconplan::analysis::{ConvergenceSummary, SensitivityTable};
use reconplan::bo::{OptimizationTrace, Phase};
use reconplan::design::COMPONENT_NAMES;
use reconplan::evaluator::EvaluationResult;

pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        // Folds -0.0 into 0.0.
        format!("{:.16e}", x + 0.0)
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn interface_names(n: usize) -> &'static [&'static str] {
    if n == 3 { &["left", "right", "middle"] } else { &["left", "right"] }
}

pub fn trace_csv(trace: &OptimizationTrace) -> String {
    let dims = trace.records.first().map_or(5, |r| r.phi.len());
    let n_avg = trace.records.first().map_or(2, |r| r.averages.len());
    let mut s = String::from("index,phase");
    for name in &COMPONENT_NAMES[..dims] {
        let _ = write!(s, ",{name}");
    }
    s.push_str(",y,best_so_far");
    for name in interface_names(n_avg) {
        let _ = write!(s, ",avg_{name}");
    }
    s.push_str(",ei,sigma_f,inflations,safeguard\n");
    for r in &trace.records {
        let phase = match r.phase {
            Phase::Warm => "warm",
            Phase::Sobol => "sobol",
            Phase::Acquisition => "acquisition",
        };
        let _ = write!(s, "{},{phase}", r.index);
        for v in &r.phi {
            let _ = write!(s, ",{}", num(*v));
        }
        let _ = write!(s, ",{},{}", num(r.y), num(r.best_so_far));
        for v in &r.averages {
            let _ = write!(s, ",{}", num(*v));
        }
        let _ = writeln!(s, ",{},{},{},{}", opt(r.ei), opt(r.sigma_f), r.inflations, u8::from(r.safeguard));
    }
    s
}

pub fn convergence_csv(summary: &ConvergenceSummary) -> String {
    let mut s = String::from("index,mean_best_so_far,std_best_so_far\n");
    for (i, (m, sd)) in summary.mean.iter().zip(&summary.std).enumerate() {
        let _ = writeln!(s, "{i},{},{}", num(*m), num(*sd));
    }
    s
}

pub fn apposition_csv(r: &EvaluationResult) -> String {
    let mut s = String::from("step,apposition_left,apposition_right");
    if r.apposition_middle.is_some() {
        s.push_str(",apposition_middle");
    }
    s.push_str(",sf_left,sf_right\n");
    for i in 0..r.n {
        let _ = write!(s, "{i},{},{}", num(r.apposition_left[i]), num(r.apposition_right[i]));
        if let Some(m) = &r.apposition_middle {
            let _ = write!(s, ",{}", num(m[i]));
        }
        let _ = writeln!(s, ",{},{}", num(r.sf_left[i]), num(r.sf_right[i]));
    }
    s
}

pub fn sensitivity_csv(tables: &[(String, SensitivityTable)]) -> String {
    let mut s = String::from("case,parameter,factor,baseline,mean,relative_change,evaluations,failures\n");
    for (case, t) in tables {
        for r in &t.rows {
            let _ = writeln!(
                s,
                "{case},{},{},{},{},{},{},{}",
                r.parameter.name(),
                num(r.factor),
                num(r.baseline),
                opt(r.mean),
                opt(r.relative_change),
                r.evaluations,
                r.errors.len()
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(-2.5), "-2.5000000000000000e0");
        assert_eq!(num(f64::INFINITY), "inf");
        let x = 0.2003225806451612_f64;
        assert_eq!(num(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn apposition_rows() {
        let r = EvaluationResult {
            n: 2,
            apposition_left: vec![0.0, 0.5],
            apposition_right: vec![0.25, 1.0],
            apposition_middle: None,
            sf_left: vec![f64::INFINITY, 3.0],
            sf_right: vec![1.0, 2.0],
        };
        let csv = apposition_csv(&r);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "step,apposition_left,apposition_right,sf_left,sf_right");
        assert!(lines[1].ends_with(",inf,1.0000000000000000e0"));
    }
}
