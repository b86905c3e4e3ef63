//! Sweep grids and reports.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::codec::CodecConfig;
use crate::planner::{read_points_csv, PointRow, TradeoffPoint};

/// Reference point plotted next to the sweep (e.g. a JPEG-compressed input).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub bytes: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub configs: Vec<CodecConfig>,
    #[serde(default)]
    pub baseline: Option<Baseline>,
}

impl SweepGrid {
    /// Cartesian product of the given axes; configs with `m > d` are skipped.
    pub fn product(block_sizes: &[usize], components: &[usize], bits: &[u32], clip: f32) -> Self {
        let mut configs = Vec::new();
        for &d in block_sizes {
            for &m in components {
                if m > d {
                    continue;
                }
                for &b in bits {
                    configs.push(CodecConfig::new(d, m, b).with_clip(clip));
                }
            }
        }
        Self { configs, baseline: None }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportPoint {
    #[serde(flatten)]
    pub point: TradeoffPoint,
    pub on_frontier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_name: String,
    pub dataset_hash: String,
    pub k_list: Vec<usize>,
    pub grid: Vec<CodecConfig>,
    pub calibration_images: usize,
    pub test_images: usize,
    pub timestamp_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<ReportPoint>,
    pub baseline: Option<Baseline>,
    pub provenance: Provenance,
}

impl SweepReport {
    pub fn tradeoff_points(&self) -> Vec<TradeoffPoint> {
        self.points.iter().map(|p| p.point.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    /// `.json` means JSON, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Csv,
        }
    }
}

/// Writes the report. CSV carries one row per point with the baseline
/// repeated on every row; JSON carries the provenance block too.
pub fn emit_report<W: Write>(report: &SweepReport, format: ReportFormat, mut out: W) -> Result<(), HarnessError> {
    if report.points.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, report)?;
            out.write_all(b"\n")?;
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record([
                "k",
                "d",
                "m",
                "b",
                "clip",
                "local_flops",
                "mean_payload_bytes",
                "top1_accuracy",
                "on_frontier",
                "baseline_bytes",
                "baseline_accuracy",
            ])?;
            for p in &report.points {
                let r = PointRow::from(&p.point);
                let opt = |v: Option<String>| v.unwrap_or_default();
                w.write_record([
                    r.k.to_string(),
                    opt(r.d.map(|v| v.to_string())),
                    opt(r.m.map(|v| v.to_string())),
                    opt(r.b.map(|v| v.to_string())),
                    opt(r.clip.map(|v| v.to_string())),
                    r.local_flops.to_string(),
                    r.mean_payload_bytes.to_string(),
                    r.top1_accuracy.to_string(),
                    p.on_frontier.to_string(),
                    opt(report.baseline.map(|b| b.bytes.to_string())),
                    opt(report.baseline.map(|b| b.accuracy.to_string())),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Trade-off points from a sweep report (CSV or JSON) or a bare JSON array
/// of points.
pub fn load_points(path: impl AsRef<Path>) -> Result<Vec<TradeoffPoint>, HarnessError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    match ReportFormat::from_path(path) {
        ReportFormat::Csv => Ok(read_points_csv(bytes.as_slice())?),
        ReportFormat::Json => match serde_json::from_slice::<SweepReport>(&bytes) {
            Ok(r) => Ok(r.tradeoff_points()),
            Err(_) => Ok(serde_json::from_slice(&bytes)?),
        },
    }
}

/// Smallest-payload point whose accuracy is within `max_loss` of
/// `reference`; ties go to fewer local FLOPs.
pub fn best_within_loss(points: &[TradeoffPoint], reference: f64, max_loss: f64) -> Option<&TradeoffPoint> {
    points
        .iter()
        .filter(|p| p.top1_accuracy >= reference - max_loss)
        .min_by(|a, b| a.mean_payload_bytes.total_cmp(&b.mean_payload_bytes).then(a.local_flops.cmp(&b.local_flops)))
}
