//! Overlap metrics and report serialization.
//!
//! CSV export writes one file per table:
//! - `report.csv`: `frame, x, y, w, h, gt_x, gt_y, gt_w, gt_h, iou, lost, corrupted, ms`
//!   (`corrupted` is empty when the sequence has no labels);
//! - `weights.csv`: `update_index, frame_index, alpha, rho, loss`;
//! - `metrics.csv` and `metrics.json`: `op_50, auc, mean_ms_per_frame` plus
//!   the sequence name, seed and frame counts;
//! - `config.txt`: the configuration echo as `key = value` lines.
//!
//! JSON export writes the whole report to `report.json`, with metrics
//! alongside in `metrics.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::joint::WeightLogRow;
use crate::kv;
use crate::tracking::Rect;

pub fn iou(a: &Rect, b: &Rect) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Percentage of frames whose IoU exceeds `threshold`.
pub fn overlap_precision(ious: &[f64], threshold: f64) -> f64 {
    if ious.is_empty() {
        return 0.0;
    }
    100.0 * ious.iter().filter(|v| **v > threshold).count() as f64 / ious.len() as f64
}

/// Thresholds `0.00, 0.05, …, 1.00`.
pub fn success_thresholds() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// `(threshold, OP)` over [`success_thresholds`].
pub fn success_curve(ious: &[f64]) -> Vec<(f64, f64)> {
    success_thresholds()
        .into_iter()
        .map(|t| (t, overlap_precision(ious, t)))
        .collect()
}

/// Trapezoid-rule mean of a curve on a uniform grid.
pub fn auc(curve: &[(f64, f64)]) -> f64 {
    match curve {
        [] => 0.0,
        [(_, v)] => *v,
        [(_, first), .., (_, last)] => {
            let sum: f64 = curve.iter().map(|(_, v)| v).sum();
            (sum - 0.5 * (first + last)) / (curve.len() - 1) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackReport {
    pub sequence: String,
    pub seed: u64,
    pub trajectory: Vec<Rect>,
    pub ground_truth: Vec<Rect>,
    pub lost: Vec<bool>,
    pub corruption_labels: Option<Vec<bool>>,
    pub frame_ms: Vec<f64>,
    /// Ordered by `(update_index, frame_index)`.
    pub weight_log: Vec<WeightLogRow>,
    pub config: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sequence: String,
    pub seed: u64,
    pub frames: usize,
    pub lost_frames: usize,
    pub op_50: f64,
    pub auc: f64,
    pub mean_ms_per_frame: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidParameter(format!("unknown report format `{other}` (csv, json)"))),
        }
    }
}

impl TrackReport {
    pub fn ious(&self) -> Vec<f64> {
        self.trajectory
            .iter()
            .zip(&self.ground_truth)
            .map(|(a, b)| iou(a, b))
            .collect()
    }

    pub fn metrics(&self) -> Metrics {
        let ious = self.ious();
        let mean_ms = if self.frame_ms.is_empty() {
            0.0
        } else {
            self.frame_ms.iter().sum::<f64>() / self.frame_ms.len() as f64
        };
        Metrics {
            sequence: self.sequence.clone(),
            seed: self.seed,
            frames: self.trajectory.len(),
            lost_frames: self.lost.iter().filter(|l| **l).count(),
            op_50: overlap_precision(&ious, 0.5),
            auc: auc(&success_curve(&ious)),
            mean_ms_per_frame: mean_ms,
        }
    }

    /// Rows of the last weight update.
    pub fn final_weights(&self) -> &[WeightLogRow] {
        let Some(last) = self.weight_log.last() else {
            return &[];
        };
        let start = self
            .weight_log
            .iter()
            .rposition(|r| r.update_index != last.update_index)
            .map_or(0, |i| i + 1);
        &self.weight_log[start..]
    }

    /// Mean final weight of corrupted frames divided by that of clean frames.
    /// `None` without labels or when either group is absent from memory.
    pub fn corrupted_weight_ratio(&self) -> Option<f64> {
        let labels = self.corruption_labels.as_ref()?;
        let (mut bad, mut good) = (Vec::new(), Vec::new());
        for row in self.final_weights() {
            match labels.get(row.frame_index - 1) {
                Some(true) => bad.push(row.alpha),
                Some(false) => good.push(row.alpha),
                None => {}
            }
        }
        if bad.is_empty() || good.is_empty() {
            return None;
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        Some(mean(&bad) / mean(&good))
    }

    pub fn export(&self, dir: &Path, format: ReportFormat) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let metrics = self.metrics();
        write_json(&dir.join("metrics.json"), &metrics)?;
        match format {
            ReportFormat::Json => write_json(&dir.join("report.json"), self),
            ReportFormat::Csv => self.export_csv(dir, &metrics),
        }
    }

    /// Reads a report written by [`TrackReport::export`].
    pub fn import(dir: &Path, format: ReportFormat) -> Result<Self> {
        match format {
            ReportFormat::Json => {
                let path = dir.join("report.json");
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                serde_json::from_str(&text).map_err(|e| Error::Format {
                    path,
                    message: e.to_string(),
                })
            }
            ReportFormat::Csv => Self::import_csv(dir),
        }
    }

    fn export_csv(&self, dir: &Path, metrics: &Metrics) -> Result<()> {
        let path = dir.join("report.csv");
        let mut w = csv_writer(&path)?;
        let ious = self.ious();
        let row = |w: &mut csv::Writer<fs::File>, fields: Vec<String>| w.write_record(&fields).map_err(|e| csv_error(&path, e));
        row(
            &mut w,
            ["frame", "x", "y", "w", "h", "gt_x", "gt_y", "gt_w", "gt_h", "iou", "lost", "corrupted", "ms"]
                .map(String::from)
                .to_vec(),
        )?;
        for k in 0..self.trajectory.len() {
            let (r, g) = (&self.trajectory[k], &self.ground_truth[k]);
            let corrupted = match &self.corruption_labels {
                Some(l) => (l[k] as u8).to_string(),
                None => String::new(),
            };
            row(
                &mut w,
                vec![
                    (k + 1).to_string(),
                    r.x.to_string(),
                    r.y.to_string(),
                    r.w.to_string(),
                    r.h.to_string(),
                    g.x.to_string(),
                    g.y.to_string(),
                    g.w.to_string(),
                    g.h.to_string(),
                    ious[k].to_string(),
                    (self.lost[k] as u8).to_string(),
                    corrupted,
                    self.frame_ms[k].to_string(),
                ],
            )?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("weights.csv");
        let mut w = csv_writer(&path)?;
        for r in &self.weight_log {
            w.serialize(r).map_err(|e| csv_error(&path, e))?;
        }
        if self.weight_log.is_empty() {
            w.write_record(["update_index", "frame_index", "alpha", "rho", "loss"])
                .map_err(|e| csv_error(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("metrics.csv");
        let mut w = csv_writer(&path)?;
        w.serialize(metrics).map_err(|e| csv_error(&path, e))?;
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("config.txt");
        fs::write(&path, kv::render(&self.config)).map_err(|e| Error::io(&path, e))
    }

    fn import_csv(dir: &Path) -> Result<Self> {
        let path = dir.join("metrics.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let metrics: Metrics = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.clone(),
            message: e.to_string(),
        })?;

        let path = dir.join("report.csv");
        let mut reader = csv::Reader::from_path(&path).map_err(|e| csv_error(&path, e))?;
        let mut report = TrackReport {
            sequence: metrics.sequence,
            seed: metrics.seed,
            trajectory: Vec::new(),
            ground_truth: Vec::new(),
            lost: Vec::new(),
            corruption_labels: None,
            frame_ms: Vec::new(),
            weight_log: Vec::new(),
            config: Vec::new(),
        };
        let mut labels = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_error(&path, e))?;
            let bad = |message: String| Error::Parse {
                path: path.clone(),
                line: i + 2,
                message,
            };
            if record.len() != 13 {
                return Err(bad(format!("expected 13 fields, found {}", record.len())));
            }
            let num = |j: usize| -> Result<f64> {
                record[j]
                    .parse()
                    .map_err(|_| bad(format!("invalid number `{}`", &record[j])))
            };
            let flag = |j: usize| -> Result<bool> {
                match &record[j] {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(bad(format!("expected 0 or 1, found `{other}`"))),
                }
            };
            report.trajectory.push(Rect::new(num(1)?, num(2)?, num(3)?, num(4)?)?);
            report.ground_truth.push(Rect::new(num(5)?, num(6)?, num(7)?, num(8)?)?);
            report.lost.push(flag(10)?);
            if !record[11].is_empty() {
                labels.push(flag(11)?);
            }
            report.frame_ms.push(num(12)?);
        }
        if !labels.is_empty() {
            if labels.len() != report.trajectory.len() {
                return Err(Error::Format {
                    path,
                    message: "corruption flags missing on some rows".into(),
                });
            }
            report.corruption_labels = Some(labels);
        }

        let path = dir.join("weights.csv");
        let mut reader = csv::Reader::from_path(&path).map_err(|e| csv_error(&path, e))?;
        for row in reader.deserialize() {
            report.weight_log.push(row.map_err(|e| csv_error(&path, e))?);
        }

        let path = dir.join("config.txt");
        report.config = kv::read(&path)?.into_iter().map(|e| (e.key, e.value)).collect();
        Ok(report)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}
