//! Post-run reporting: retention heatmap export, bandwidth accounting, and
//! clean-vs-attacked comparison tables over run directories.

use crate::metrics::{MetricsRow, RunSummary};
use anyhow::Context;
use spikefed::compress::{dense_payload_bytes, sparse_payload_bytes};
use spikefed::nn::LayerSlice;
use std::fmt::Write as _;
use std::path::Path;

/// Export per-parameter retention frequencies as a CSV matrix arranged by
/// the layer layout: one `# layer` comment per block, then `rows` lines of
/// `cols` frequencies. Frequencies are counts normalized by the number of
/// updates recorded (rounds times clients).
pub fn write_heatmap(
    counts: &[u64],
    updates_recorded: u64,
    layout: &[LayerSlice],
    path: &Path,
) -> anyhow::Result<()> {
    let norm = updates_recorded.max(1) as f64;
    let mut out = String::new();
    for slice in layout {
        writeln!(out, "# layer {} rows {} cols {}", slice.layer, slice.rows, slice.cols)?;
        for j in 0..slice.rows {
            let row: Vec<String> = (0..slice.cols)
                .map(|i| (counts[slice.offset + j * slice.cols + i] as f64 / norm).to_string())
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
    }
    std::fs::write(path, out).with_context(|| format!("writing heatmap {}", path.display()))?;
    Ok(())
}

/// Parse a heatmap matrix back into a flat frequency vector (layout order).
pub fn read_heatmap(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading heatmap {}", path.display()))?;
    let mut freqs = Vec::new();
    for line in text.lines() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        for cell in line.split(',') {
            freqs.push(cell.parse::<f64>()?);
        }
    }
    Ok(freqs)
}

/// Mean and standard deviation of retention frequencies; the std is the
/// evenness statistic used to compare how uniformly models spread their
/// top-k mass.
pub fn frequency_dispersion(freqs: &[f64]) -> (f64, f64) {
    if freqs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = freqs.iter().sum::<f64>() / freqs.len() as f64;
    let var = freqs.iter().map(|&f| (f - mean) * (f - mean)).sum::<f64>() / freqs.len() as f64;
    (mean, var.sqrt())
}

/// Totals over a metrics series plus the analytic sparse/dense payload
/// ratio for the run's dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthTotals {
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    /// `(8k + header) / (4d + header)`; 1 for dense runs.
    pub analytic_uplink_ratio_vs_dense: f64,
}

pub fn bandwidth_report(rows: &[MetricsRow], dim: usize, retained: Option<u32>) -> BandwidthTotals {
    let uplink = rows.iter().map(|r| r.uplink_bytes).sum();
    let downlink = rows.iter().map(|r| r.downlink_bytes).sum();
    let ratio = match retained {
        Some(k) => sparse_payload_bytes(k as usize) as f64 / dense_payload_bytes(dim) as f64,
        None => 1.0,
    };
    BandwidthTotals {
        uplink_bytes: uplink,
        downlink_bytes: downlink,
        analytic_uplink_ratio_vs_dense: ratio,
    }
}

/// One line of the `report` subcommand's table.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub dir: String,
    pub summary: RunSummary,
    pub accuracy_loss: Option<f64>,
    pub retention_mean: Option<f64>,
    pub retention_std: Option<f64>,
}

/// Read run directories and assemble the comparison table. When a baseline
/// directory is given, every row gains `accuracy_loss` = baseline final
/// accuracy minus the row's final accuracy.
pub fn report_runs(dirs: &[&Path], baseline: Option<&Path>) -> anyhow::Result<Vec<ReportRow>> {
    let base_acc = match baseline {
        Some(dir) => Some(RunSummary::load(&dir.join("summary.toml"))?.final_accuracy),
        None => None,
    };
    let mut rows = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let summary = RunSummary::load(&dir.join("summary.toml"))?;
        let heat = dir.join("retention.csv");
        let (retention_mean, retention_std) = if heat.exists() {
            let freqs = read_heatmap(&heat)?;
            let (m, s) = frequency_dispersion(&freqs);
            (Some(m), Some(s))
        } else {
            (None, None)
        };
        rows.push(ReportRow {
            dir: dir.display().to_string(),
            accuracy_loss: base_acc.map(|b| spikefed::fl::accuracy_loss(b, summary.final_accuracy)),
            summary,
            retention_mean,
            retention_std,
        });
    }
    Ok(rows)
}

pub const REPORT_HEADER: &str = "dir,model,attack,intensity,kappa,final_acc,accuracy_loss,total_uplink_bytes,total_downlink_bytes,retention_mean,retention_std,diverged";

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in rows {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.dir,
            r.summary.model,
            r.summary.attack,
            r.summary.intensity,
            opt(r.summary.kappa),
            r.summary.final_accuracy,
            opt(r.accuracy_loss),
            r.summary.total_uplink_bytes,
            r.summary.total_downlink_bytes,
            opt(r.retention_mean),
            opt(r.retention_std),
            r.summary.diverged,
        )
        .expect("string write");
    }
    out
}
