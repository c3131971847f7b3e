//! Report files: the full report as pretty JSON, or its per-layer rows as a
//! CSV table. Totals are re-checked against the rows before anything is
//! written.

use std::path::Path;

use serde::Serialize;

use crate::analog::AnalogCostReport;
use crate::digital::DigitalCostReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidArgument(format!("unknown report format '{other}' (expected json or csv)"))),
        }
    }
}

/// A cost report with per-(layer, timestep) rows whose sums are the totals.
pub trait CostReport: Serialize {
    fn check_totals(&self) -> Result<()>;
    fn csv_header(&self) -> Vec<String>;
    fn csv_rows(&self) -> Vec<Vec<String>>;
}

fn header(fixed: &[&str], energy: &[(&'static str, f64)]) -> Vec<String> {
    fixed
        .iter()
        .map(|s| s.to_string())
        .chain(energy.iter().map(|(n, _)| n.to_string()))
        .collect()
}

impl CostReport for DigitalCostReport {
    fn check_totals(&self) -> Result<()> {
        DigitalCostReport::check_totals(self)
    }

    fn csv_header(&self) -> Vec<String> {
        header(
            &["layer", "kind", "timestep", "samples", "active_ops", "latency_cycles"],
            &self.energy.components(),
        )
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut v = vec![
                    r.layer.to_string(),
                    r.kind.clone(),
                    r.timestep.to_string(),
                    r.samples.to_string(),
                    r.active_ops.to_string(),
                    r.latency_cycles.to_string(),
                ];
                v.extend(r.energy.components().iter().map(|(_, e)| e.to_string()));
                v
            })
            .collect()
    }
}

impl CostReport for AnalogCostReport {
    fn check_totals(&self) -> Result<()> {
        AnalogCostReport::check_totals(self)
    }

    fn csv_header(&self) -> Vec<String> {
        header(&["layer", "kind", "timestep", "samples", "latency_ns"], &self.energy.components())
    }

    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut v = vec![
                    r.layer.to_string(),
                    r.kind.clone(),
                    r.timestep.to_string(),
                    r.samples.to_string(),
                    r.latency_ns.to_string(),
                ];
                v.extend(r.energy.components().iter().map(|(_, e)| e.to_string()));
                v
            })
            .collect()
    }
}

pub fn report_to_json<R: CostReport>(report: &R) -> Result<String> {
    report.check_totals()?;
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn report_to_csv<R: CostReport>(report: &R) -> Result<String> {
    report.check_totals()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(report.csv_header())?;
    for row in report.csv_rows() {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_report<R: CostReport>(report: &R, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let text = match format {
        ReportFormat::Json => report_to_json(report)?,
        ReportFormat::Csv => report_to_csv(report)?,
    };
    std::fs::write(path, text)?;
    Ok(())
}
