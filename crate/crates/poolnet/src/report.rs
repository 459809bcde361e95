//! Experiment report files: JSON documents and CSV curves, written
//! atomically (temp file in the target directory, then rename).

use crate::error::Result;
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Format version stamped into every JSON report.
pub const SCHEMA_VERSION: u32 = 1;

/// Envelope wrapping a payload with the schema version.
#[derive(Debug, Clone, Serialize)]
pub struct Report<T: Serialize> {
    pub schema_version: u32,
    pub kind: String,
    #[serde(flatten)]
    pub payload: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(kind: impl Into<String>, payload: T) -> Self {
        Report {
            schema_version: SCHEMA_VERSION,
            kind: kind.into(),
            payload,
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Serialize a report to pretty JSON and write it atomically.
pub fn write_json<T: Serialize>(path: &Path, report: &Report<T>) -> Result<()> {
    let mut body = serde_json::to_vec_pretty(report)?;
    body.push(b'\n');
    write_atomic(path, &body)
}

/// Write a CSV file with a header row, atomically. Every row must have the
/// header's arity.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// CSV rows for a probability curve: columns x, p, stderr.
pub fn curve_rows(points: &[(usize, crate::experiments::ProbabilityEstimate)]) -> Vec<Vec<String>> {
    points
        .iter()
        .map(|(x, est)| vec![x.to_string(), format!("{}", est.p), format!("{}", est.stderr)])
        .collect()
}

/// CSV rows for a training run: columns epoch, loss, train_acc, test_acc.
pub fn epoch_rows(epochs: &[crate::experiments::EpochStats]) -> Vec<Vec<String>> {
    epochs
        .iter()
        .map(|e| {
            vec![
                e.epoch.to_string(),
                format!("{}", e.train_loss),
                format!("{}", e.train_accuracy),
                format!("{}", e.test_accuracy),
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ProbabilityEstimate;
    use serde::Serialize;

    #[derive(Serialize)]
    struct Payload {
        value: f64,
    }

    #[test]
    fn json_report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out/report.json");
        write_json(&path, &Report::new("demo", Payload { value: 2.5 })).unwrap();
        let parsed: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(parsed["schema_version"], 1);
        assert_eq!(parsed["kind"], "demo");
        assert_eq!(parsed["value"], 2.5);
    }

    #[test]
    fn json_overwrite_is_atomic_replacement() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        write_json(&path, &Report::new("demo", Payload { value: 1.0 })).unwrap();
        write_json(&path, &Report::new("demo", Payload { value: 2.0 })).unwrap();
        let parsed: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(parsed["value"], 2.0);
        // No stray temp files left behind.
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        let points = vec![(2, ProbabilityEstimate::from_counts(10, 100))];
        write_csv(&path, &["x", "p", "stderr"], &curve_rows(&points)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x,p,stderr");
        assert!(lines.next().unwrap().starts_with("2,0.1,"));
    }
}
