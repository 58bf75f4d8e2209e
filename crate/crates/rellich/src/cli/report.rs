//! Report assembly: one JSON report per run, CSV tables for tabular
//! commands. Identical config and seed reproduce the bytes, apart from the
//! timestamp field on its own line.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

/// One named check with its numbers. `hypothesis` marks checks that guard a
/// theorem's hypotheses rather than its conclusion; their failure makes a run
/// vacuous, not a counterexample.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub key: String,
    pub passed: bool,
    pub hypothesis: bool,
    pub value: f64,
    pub error_bound: f64,
    pub threshold: f64,
    pub note: String,
}

impl Check {
    pub fn new(key: impl Into<String>, passed: bool, value: f64) -> Self {
        Check {
            key: key.into(),
            passed,
            hypothesis: false,
            value,
            error_bound: 0.0,
            threshold: 0.0,
            note: String::new(),
        }
    }

    pub fn with_error(mut self, error_bound: f64) -> Self {
        self.error_bound = error_bound;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn as_hypothesis(mut self) -> Self {
        self.hypothesis = true;
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub timestamp: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    /// hypotheses actually verified for this run (sign condition status,
    /// the D used, ψ positivity …), making every "pass" auditable
    pub hypotheses: Vec<Check>,
    pub checks: Vec<Check>,
    pub tables: Vec<String>,
    /// full tabular payload (sweep rows, refinement levels) mirrored from
    /// the CSV files
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<serde_json::Value>,
}

impl Report {
    pub fn new(command: &str, seed: u64, config: BTreeMap<String, String>) -> Self {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs().to_string())
            .unwrap_or_default();
        Report {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            timestamp,
            seed,
            config,
            hypotheses: Vec::new(),
            checks: Vec::new(),
            tables: Vec::new(),
            data: None,
        }
    }

    /// Deterministic output order: checks sorted by key.
    pub fn finish(&mut self) {
        self.hypotheses.sort_by(|a, b| a.key.cmp(&b.key));
        self.checks.sort_by(|a, b| a.key.cmp(&b.key));
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn hypotheses_hold(&self) -> bool {
        self.hypotheses.iter().all(|c| c.passed)
    }

    pub fn write_json(&self, out_dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(out_dir)?;
        let path = out_dir.join("report.json");
        let mut file = std::fs::File::create(&path)?;
        let body = serde_json::to_string_pretty(self).expect("report serializes");
        file.write_all(body.as_bytes())?;
        file.write_all(b"\n")?;
        Ok(path)
    }
}

/// RFC-4180 CSV with a leading `#` comment line documenting the columns.
pub struct CsvTable {
    pub name: String,
    pub comment: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn csv_quote(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

impl CsvTable {
    pub fn write(&self, out_dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(out_dir)?;
        let path = out_dir.join(format!("{}.csv", self.name));
        let mut file = std::fs::File::create(&path)?;
        writeln!(file, "# {}", self.comment)?;
        let join = |row: &[String]| {
            row.iter()
                .map(|f| csv_quote(f))
                .collect::<Vec<_>>()
                .join(",")
        };
        writeln!(file, "{}", join(&self.header))?;
        for row in &self.rows {
            writeln!(file, "{}", join(row))?;
        }
        Ok(path)
    }
}

/// Formats a float with full round-trip precision, deterministically.
pub fn num(v: f64) -> String {
    format!("{v:.17e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quoting_is_rfc4180() {
        assert_eq!(csv_quote("plain"), "plain");
        assert_eq!(csv_quote("a,b"), "\"a,b\"");
        assert_eq!(csv_quote("say \"hi\""), "\"say \"\"hi\"\"\"");
    }

    #[test]
    fn report_sorts_checks() {
        let mut r = Report::new("test", 0, BTreeMap::new());
        r.checks.push(Check::new("zeta", true, 1.0));
        r.checks.push(Check::new("alpha", true, 2.0));
        r.finish();
        assert_eq!(r.checks[0].key, "alpha");
    }
}
