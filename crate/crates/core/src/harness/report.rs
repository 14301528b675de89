use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One compared quantity in a verifier report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub check: String,
    /// Grid parameter (t, a, n, ...); NaN when not applicable.
    pub parameter: f64,
    pub observed: f64,
    pub reference: f64,
    pub stderr: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(check: impl Into<String>, parameter: f64, observed: f64, reference: f64, stderr: f64, passed: bool) -> Self {
        Self { check: check.into(), parameter, observed, reference, stderr, passed }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifierReport {
    pub name: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    /// Set when the verifier declined to run (regime outside its scope).
    pub skipped: bool,
}

impl VerifierReport {
    pub fn new(name: impl Into<String>, checks: Vec<Check>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        Self { name: name.into(), passed, checks, notes: Vec::new(), skipped: false }
    }

    pub fn skipped(name: impl Into<String>, note: impl Into<String>) -> Self {
        Self { name: name.into(), passed: true, checks: Vec::new(), notes: vec![note.into()], skipped: true }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    /// Columns: `check,parameter,observed,reference,stderr,passed`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["check", "parameter", "observed", "reference", "stderr", "passed"])?;
        for c in &self.checks {
            w.write_record([
                c.check.clone(),
                c.parameter.to_string(),
                c.observed.to_string(),
                c.reference.to_string(),
                c.stderr.to_string(),
                c.passed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Machine-readable pass/fail summary.
    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "name": self.name,
            "passed": self.passed,
            "skipped": self.skipped,
            "failed_checks": self.checks.iter().filter(|c| !c.passed).map(|c| &c.check).collect::<Vec<_>>(),
            "notes": self.notes,
        })
    }
}
