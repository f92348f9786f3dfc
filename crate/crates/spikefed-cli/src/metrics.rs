//! Metrics persistence: the per-round CSV stream and the run summary file.
//!
//! CSV data columns are a pure function of (config, seed): no timestamps,
//! floats printed in shortest round-trip form.

use anyhow::Context;
use serde::{Deserialize, Serialize};
use spikefed::fl::RoundReport;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub const CSV_HEADER: &str =
    "round,train_loss,test_acc,uplink_bytes,downlink_bytes,max_update_norm,mean_update_norm";

/// One parsed metrics row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub round: u64,
    pub train_loss: f64,
    pub test_acc: Option<f64>,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    pub max_update_norm: f64,
    pub mean_update_norm: f64,
}

pub fn format_row(report: &RoundReport) -> String {
    let max_norm = report.update_norms.iter().cloned().fold(0.0f64, f64::max);
    let mean_norm = if report.update_norms.is_empty() {
        0.0
    } else {
        report.update_norms.iter().sum::<f64>() / report.update_norms.len() as f64
    };
    let acc = report
        .test_accuracy
        .map(|a| a.to_string())
        .unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{}",
        report.round,
        report.train_loss,
        acc,
        report.uplink_bytes,
        report.downlink_bytes,
        max_norm,
        mean_norm
    )
}

/// Incremental CSV writer; one line per executed round.
pub struct CsvWriter {
    out: BufWriter<File>,
}

impl CsvWriter {
    pub fn create(path: &Path) -> anyhow::Result<Self> {
        let file = File::create(path)
            .with_context(|| format!("creating metrics file {}", path.display()))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{CSV_HEADER}")?;
        Ok(Self { out })
    }

    pub fn write(&mut self, report: &RoundReport) -> anyhow::Result<()> {
        writeln!(self.out, "{}", format_row(report))?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn parse_metrics(path: &Path) -> anyhow::Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading metrics {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    anyhow::ensure!(header == CSV_HEADER, "unexpected metrics header: {header}");
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        anyhow::ensure!(cols.len() == 7, "line {}: expected 7 columns", ln + 2);
        rows.push(MetricsRow {
            round: cols[0].parse()?,
            train_loss: cols[1].parse()?,
            test_acc: if cols[2].is_empty() {
                None
            } else {
                Some(cols[2].parse()?)
            },
            uplink_bytes: cols[3].parse()?,
            downlink_bytes: cols[4].parse()?,
            max_update_norm: cols[5].parse()?,
            mean_update_norm: cols[6].parse()?,
        });
    }
    Ok(rows)
}

/// Scalar outcome of one run, written as `summary.toml`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunSummary {
    pub model: String,
    pub attack: String,
    pub intensity: f64,
    pub malicious_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    pub seed: u64,
    pub clients: usize,
    pub rounds_requested: u64,
    pub rounds_completed: u64,
    pub param_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retained_per_update: Option<u32>,
    /// Mean of the last five evaluations (fewer if the run was short).
    pub final_accuracy: f64,
    pub last_accuracy: f64,
    pub total_uplink_bytes: u64,
    pub total_downlink_bytes: u64,
    pub diverged: bool,
}

impl RunSummary {
    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        std::fs::write(path, toml::to_string_pretty(self)?)
            .with_context(|| format!("writing summary {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading summary {}", path.display()))?;
        Ok(toml::from_str(&text)?)
    }
}

/// Mean of the trailing five evaluation accuracies.
pub fn final_accuracy(evaluations: &[(u64, f64)]) -> f64 {
    if evaluations.is_empty() {
        return 0.0;
    }
    let tail = &evaluations[evaluations.len().saturating_sub(5)..];
    tail.iter().map(|&(_, a)| a).sum::<f64>() / tail.len() as f64
}
