//! Tab-separated metrics table.
//!
//! Header `batch\tloss\tmean_hs\tprobe_accuracy`, one row per record,
//! missing values written as `NA`. Floats use Rust's shortest
//! round-trip formatting, so parsing a file recovers the exact values.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const HEADER: &str = "batch\tloss\tmean_hs\tprobe_accuracy";

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsRecord {
    pub batch: u64,
    pub loss: Option<f64>,
    pub mean_hs: Option<f64>,
    pub probe_accuracy: Option<f64>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:?}"))
}

pub fn format_metrics(records: &[MetricsRecord]) -> String {
    let mut s = String::from(HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}",
            r.batch,
            cell(r.loss),
            cell(r.mean_hs),
            cell(r.probe_accuracy)
        );
    }
    s
}

pub fn parse_metrics(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(Error::Format("metrics file lacks the expected header".into()));
    }
    let parse = |s: &str, line: usize| -> Result<Option<f64>> {
        if s == "NA" {
            return Ok(None);
        }
        s.parse()
            .map(Some)
            .map_err(|_| Error::Format(format!("metrics line {line}: bad number `{s}`")))
    };
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(Error::Format(format!("metrics line {}: expected 4 fields", i + 2)));
            }
            Ok(MetricsRecord {
                batch: f[0]
                    .parse()
                    .map_err(|_| Error::Format(format!("metrics line {}: bad batch", i + 2)))?,
                loss: parse(f[1], i + 2)?,
                mean_hs: parse(f[2], i + 2)?,
                probe_accuracy: parse(f[3], i + 2)?,
            })
        })
        .collect()
}

pub fn export_metrics(records: &[MetricsRecord], path: &Path) -> Result<()> {
    std::fs::write(path, format_metrics(records)).map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(&text)
}
