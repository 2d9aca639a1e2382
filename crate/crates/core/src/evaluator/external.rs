use std::io::Write;
use std::process::{Command, Stdio};

use serde::Serialize;

use super::{EvaluationResult, Evaluator};
use crate::design::{DesignVector, FeasibleRegion};
use crate::error::{Error, Result};

/// Runs one subprocess per evaluation.
///
/// The request `{"phi": [..]}` is written to the child's stdin; the child
/// must print an [`EvaluationResult`] as JSON on stdout and exit with status 0.
#[derive(Debug, Clone)]
pub struct ExternalEvaluator {
    region: FeasibleRegion,
    program: String,
    args: Vec<String>,
}

#[derive(Serialize)]
struct Request<'a> {
    phi: &'a [f64],
}

impl ExternalEvaluator {
    pub fn new(region: FeasibleRegion, command: &[String]) -> Result<Self> {
        let (program, args) = command.split_first().ok_or(Error::Empty("external evaluator command"))?;
        Ok(Self { region, program: program.clone(), args: args.to_vec() })
    }
}

impl Evaluator for ExternalEvaluator {
    fn region(&self) -> &FeasibleRegion {
        &self.region
    }

    fn evaluate(&self, phi: &DesignVector) -> Result<EvaluationResult> {
        self.region.ensure_contains(phi)?;
        let request = serde_json::to_vec(&Request { phi: &phi.to_vec() })?;
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Evaluator(format!("cannot start `{}`: {e}", self.program)))?;
        // A child that exits without reading stdin closes the pipe; its exit
        // status and output decide the outcome.
        if let Some(mut stdin) = child.stdin.take() {
            let _ = stdin.write_all(&request);
        }
        let out = child.wait_with_output().map_err(|e| Error::Evaluator(e.to_string()))?;
        if !out.status.success() {
            return Err(Error::Evaluator(format!(
                "`{}` exited with {}: {}",
                self.program,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let result: EvaluationResult =
            serde_json::from_slice(&out.stdout).map_err(|e| Error::Evaluator(format!("malformed response: {e}")))?;
        result.validate()?;
        let expected = 1 + usize::from(self.region.segment_count() == 2);
        if usize::from(result.apposition_middle.is_some()) + 1 != expected {
            return Err(Error::Evaluator("response interfaces do not match the case".into()));
        }
        Ok(result)
    }
}
