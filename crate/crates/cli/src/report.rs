//! CSV reports and their JSON sidecars.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const CSV_HEADER: [&str; 7] = [
    "experiment",
    "quantity",
    "level",
    "certified",
    "empirical",
    "tolerance",
    "seconds",
];

/// One line of a report. Rows with both bounds must satisfy
/// `empirical ≤ certified + tolerance`; commands may impose further checks.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub quantity: String,
    pub level: Option<usize>,
    pub certified: Option<f64>,
    pub empirical: Option<f64>,
    pub tolerance: Option<f64>,
    pub seconds: f64,
    pub passed: bool,
    pub witness: Option<Value>,
}

impl ReportRow {
    pub fn new(quantity: impl Into<String>, level: Option<usize>) -> Self {
        Self {
            quantity: quantity.into(),
            level,
            certified: None,
            empirical: None,
            tolerance: None,
            seconds: 0.0,
            passed: true,
            witness: None,
        }
    }

    pub fn certified(mut self, v: f64) -> Self {
        self.certified = Some(v);
        self
    }

    pub fn empirical(mut self, v: f64) -> Self {
        self.empirical = Some(v);
        self
    }

    pub fn tolerance(mut self, v: f64) -> Self {
        self.tolerance = Some(v);
        self
    }

    /// An extra pass condition, combined with the bound check.
    pub fn check(mut self, ok: bool) -> Self {
        self.passed &= ok;
        self
    }

    pub fn witness(mut self, w: Value) -> Self {
        self.witness = Some(w);
        self
    }

    pub fn timed(mut self, since: Instant) -> Self {
        self.seconds = since.elapsed().as_secs_f64();
        self
    }

    fn bound_ok(&self) -> bool {
        match (self.certified, self.empirical) {
            (Some(c), Some(e)) => e <= c + self.tolerance.unwrap_or(0.0),
            _ => true,
        }
    }

    pub fn ok(&self) -> bool {
        self.passed && self.bound_ok() && [self.certified, self.empirical].iter().flatten().all(|v| !v.is_nan())
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    experiment: &'a str,
    quantity: &'a str,
    level: Option<usize>,
    certified: Option<f64>,
    empirical: Option<f64>,
    tolerance: Option<f64>,
    seconds: String,
}

#[derive(Serialize)]
struct JsonRow<'a> {
    quantity: &'a str,
    level: Option<usize>,
    certified: Option<f64>,
    empirical: Option<f64>,
    tolerance: Option<f64>,
    passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness_digest: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<&'a Value>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    experiment: &'a str,
    command: &'a str,
    seed: u64,
    config_digest: &'a str,
    passed: bool,
    failures: Vec<&'a str>,
    summary: &'a Value,
    rows: Vec<JsonRow<'a>>,
}

/// Rows for one command, plus free-form summary data for the sidecar.
#[derive(Debug, Clone)]
pub struct Report {
    pub experiment: String,
    pub command: String,
    pub seed: u64,
    pub config_digest: String,
    pub rows: Vec<ReportRow>,
    pub summary: Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Report {
    pub fn new(experiment: &str, command: &str, seed: u64, config_digest: String) -> Self {
        Self {
            experiment: experiment.into(),
            command: command.into(),
            seed,
            config_digest,
            rows: Vec::new(),
            summary: Value::Null,
        }
    }

    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }

    pub fn failures(&self) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| !r.ok())
            .map(|r| r.quantity.as_str())
            .collect()
    }

    pub fn csv_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}_{}.csv", self.experiment, self.command))
    }

    pub fn json_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}_{}.json", self.experiment, self.command))
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.serialize(CsvRow {
                experiment: &self.experiment,
                quantity: &r.quantity,
                level: r.level,
                certified: r.certified,
                empirical: r.empirical,
                tolerance: r.tolerance,
                seconds: format!("{:.3}", r.seconds),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// The sidecar holds no timings, so it is byte-identical across reruns.
    pub fn sidecar(&self) -> Result<String> {
        let rows = self
            .rows
            .iter()
            .map(|r| -> Result<JsonRow<'_>> {
                let witness_digest = match &r.witness {
                    Some(w) => Some(sha256_hex(serde_json::to_string(w)?.as_bytes())),
                    None => None,
                };
                Ok(JsonRow {
                    quantity: &r.quantity,
                    level: r.level,
                    certified: r.certified,
                    empirical: r.empirical,
                    tolerance: r.tolerance,
                    passed: r.ok(),
                    witness_digest,
                    witness: r.witness.as_ref(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let failures = self.failures();
        let doc = Sidecar {
            experiment: &self.experiment,
            command: &self.command,
            seed: self.seed,
            config_digest: &self.config_digest,
            passed: failures.is_empty(),
            failures,
            summary: &self.summary,
            rows,
        };
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }

    /// Writes both files into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv_path = self.csv_path(dir);
        self.write_csv(std::fs::File::create(&csv_path)?)?;
        let json_path = self.json_path(dir);
        std::fs::write(&json_path, self.sidecar()?)?;
        Ok((csv_path, json_path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_check_bounds_and_nan() {
        assert!(ReportRow::new("x", None)
            .certified(1.0)
            .empirical(1.0 + 1e-10)
            .tolerance(1e-9)
            .ok());
        assert!(!ReportRow::new("x", None)
            .certified(1.0)
            .empirical(1.1)
            .tolerance(1e-9)
            .ok());
        assert!(!ReportRow::new("x", None).empirical(f64::NAN).ok());
        assert!(!ReportRow::new("x", None).check(false).ok());
    }

    #[test]
    fn csv_layout() {
        let mut r = Report::new("e", "bridge", 1, String::new());
        r.push(
            ReportRow::new("bridge_length", Some(2))
                .certified(0.0625)
                .empirical(0.05),
        );
        r.push(ReportRow::new("note", None));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "experiment,quantity,level,certified,empirical,tolerance,seconds"
        );
        assert_eq!(lines[1], "e,bridge_length,2,0.0625,0.05,,0.000");
        assert_eq!(lines[2], "e,note,,,,,0.000");
    }
}
