//! Report assembly and the on-disk formats: report.json, samples.csv, and
//! the optional field.csv dump.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

/// One asserted tolerance: `value` compared against `threshold` under `op`.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub op: CheckOp,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckOp {
    Le,
    Ge,
}

impl Check {
    pub fn le(name: impl Into<String>, value: f64, threshold: f64) -> Check {
        Check {
            name: name.into(),
            value,
            op: CheckOp::Le,
            threshold,
            pass: value <= threshold,
        }
    }

    pub fn ge(name: impl Into<String>, value: f64, threshold: f64) -> Check {
        Check {
            name: name.into(),
            value,
            op: CheckOp::Ge,
            threshold,
            pass: value >= threshold,
        }
    }

    /// A yes/no gate recorded in check form.
    pub fn flag(name: impl Into<String>, ok: bool) -> Check {
        Check {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            op: CheckOp::Ge,
            threshold: 1.0,
            pass: ok,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub grid: Vec<usize>,
    /// Wall-clock label only; excluded from determinism comparisons.
    pub generated_at: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub payload: serde_json::Value,
}

impl Report {
    pub fn new(
        experiment: &str,
        config_hash: String,
        seed: u64,
        grid: Vec<usize>,
        checks: Vec<Check>,
        payload: serde_json::Value,
    ) -> Report {
        let passed = checks.iter().all(|c| c.pass);
        let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
        Report {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.into(),
            config_hash,
            seed,
            grid,
            generated_at: format!("unix:{}.{:03}", now.as_secs(), now.subsec_millis()),
            passed,
            checks,
            payload,
        }
    }

    pub fn write_json(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        let path = dir.join("report.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }

    /// One screen: header, one row per check, verdict last.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "experiment      {}", self.experiment);
        let _ = writeln!(out, "config hash     {}", self.config_hash);
        let _ = writeln!(out, "seed            {}", self.seed);
        if !self.grid.is_empty() {
            let _ = writeln!(out, "grid cells      {:?}", self.grid);
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<44} {:>13} {:>2} {:>9}  result", "check", "value", "", "bound");
        for c in &self.checks {
            let op = match c.op {
                CheckOp::Le => "<=",
                CheckOp::Ge => ">=",
            };
            let _ = writeln!(
                out,
                "{:<44} {:>13.4e} {:>2} {:>9.1e}  {}",
                c.name,
                c.value,
                op,
                c.threshold,
                if c.pass { "pass" } else { "FAIL" }
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "verdict         {}", if self.passed { "pass" } else { "FAIL" });
        out
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.pass)
    }
}

/// One scanned pair for the plotting CSV.
#[derive(Debug, Clone)]
pub struct SampleRow {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub z_value: f64,
    pub separation: f64,
    pub classification: String,
}

pub fn write_samples(dir: &Path, dim: usize, rows: &[SampleRow]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = String::new();
    let mut header = Vec::new();
    for prefix in ["x", "y", "z"] {
        for a in 0..dim {
            header.push(format!("{prefix}{a}"));
        }
    }
    header.push("z_value".into());
    header.push("separation".into());
    header.push("classification".into());
    let _ = writeln!(text, "{}", header.join(","));
    for row in rows {
        let mut cols = Vec::new();
        for v in row.x.iter().chain(&row.y).chain(&row.z) {
            cols.push(format!("{v:?}"));
        }
        cols.push(format!("{:?}", row.z_value));
        cols.push(format!("{:?}", row.separation));
        cols.push(row.classification.clone());
        let _ = writeln!(text, "{}", cols.join(","));
    }
    let path = dir.join("samples.csv");
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Grid dump of a solved field: chart coordinates then the value.
pub fn write_field(dir: &Path, field: &twopoint::field::ScalarField) -> Result<()> {
    fs::create_dir_all(dir)?;
    let grid = field.grid();
    let dim = field.domain().dim();
    let mut text = String::new();
    let mut header: Vec<String> = (0..dim).map(|a| format!("q{a}")).collect();
    header.push("u".into());
    let _ = writeln!(text, "{}", header.join(","));
    for lin in 0..grid.n_nodes() {
        let idx = grid.unlin(lin);
        let chart = grid.chart_of(&idx);
        let mut cols: Vec<String> = chart.iter().map(|v| format!("{v:?}")).collect();
        cols.push(format!("{:?}", field.values()[lin]));
        let _ = writeln!(text, "{}", cols.join(","));
    }
    let path = dir.join("field.csv");
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checks_record_their_comparison() {
        let c = Check::le("residual", 1e-9, 1e-8);
        assert!(c.pass);
        let c = Check::ge("slope", 1.7, 1.9);
        assert!(!c.pass);
        let c = Check::flag("gate", true);
        assert!(c.pass);
    }

    #[test]
    fn summary_flags_the_failing_row() {
        let report = Report::new(
            "scan",
            "fnv1a64:0".into(),
            3,
            vec![64],
            vec![Check::ge("scan_min_z", -0.5, -1e-6)],
            serde_json::Value::Null,
        );
        assert!(!report.passed);
        let text = report.summary();
        assert!(text.contains("scan_min_z"));
        assert!(text.contains("FAIL"));
        assert_eq!(report.first_failure().unwrap().name, "scan_min_z");
    }
}
