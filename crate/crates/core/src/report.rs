//! Per-device summary table with errors relative to a reference device.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::IoError;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("reference device {0:?} not in the table")]
    UnknownReference(String),
    #[error("reference device {0:?} has a zero {1} mean")]
    ZeroReference(String, &'static str),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Mean errors of one device, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSummary {
    pub device: String,
    pub mean_rpe: f64,
    pub mean_ape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceReport {
    pub device: String,
    pub mean_rpe_cm: f64,
    pub mean_ape_cm: f64,
    /// 100 · device mean / reference mean.
    pub rpe_ratio_pct: f64,
    pub ape_ratio_pct: f64,
}

pub fn ratio_table(summaries: &[DeviceSummary], reference: &str) -> Result<Vec<DeviceReport>, ReportError> {
    let r = summaries
        .iter()
        .find(|s| s.device == reference)
        .ok_or_else(|| ReportError::UnknownReference(reference.to_string()))?;
    if r.mean_rpe == 0.0 {
        return Err(ReportError::ZeroReference(reference.into(), "RPE"));
    }
    if r.mean_ape == 0.0 {
        return Err(ReportError::ZeroReference(reference.into(), "APE"));
    }
    Ok(summaries
        .iter()
        .map(|s| DeviceReport {
            device: s.device.clone(),
            mean_rpe_cm: s.mean_rpe * 100.0,
            mean_ape_cm: s.mean_ape * 100.0,
            rpe_ratio_pct: 100.0 * (s.mean_rpe / r.mean_rpe),
            ape_ratio_pct: 100.0 * (s.mean_ape / r.mean_ape),
        })
        .collect())
}

/// Parses `device,rpe_cm,ape_cm` rows (header optional) into summaries in meters.
pub fn parse_summary_table(text: &str) -> Result<Vec<DeviceSummary>, ReportError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(ReportError::Parse {
                line,
                msg: format!("expected `device,rpe_cm,ape_cm`, got {} fields", fields.len()),
            });
        }
        let nums: Result<Vec<f64>, _> = fields[1..].iter().map(|f| f.parse::<f64>()).collect();
        match nums {
            Ok(v) if v.iter().all(|x| x.is_finite() && *x >= 0.0) => out.push(DeviceSummary {
                device: fields[0].to_string(),
                mean_rpe: v[0] / 100.0,
                mean_ape: v[1] / 100.0,
            }),
            Ok(_) => {
                return Err(ReportError::Parse {
                    line,
                    msg: "errors must be finite and non-negative".into(),
                })
            }
            Err(_) if out.is_empty() && line == first_content_line(text) => continue,
            Err(e) => {
                return Err(ReportError::Parse {
                    line,
                    msg: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

fn first_content_line(text: &str) -> usize {
    text.lines()
        .position(|l| !l.trim().is_empty() && !l.trim().starts_with('#'))
        .map_or(0, |i| i + 1)
}

pub fn format_text(reports: &[DeviceReport], reference: &str) -> String {
    let w = reports.iter().map(|r| r.device.len()).max().unwrap_or(6).max(6);
    let mut out = format!(
        "{:<w$}  {:>9}  {:>9}  {:>9}  {:>9}\n",
        "device", "RPE cm", "RPE %", "APE cm", "APE %"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<w$}  {:>9.2}  {:>8.1}%  {:>9.2}  {:>8.1}%",
            r.device, r.mean_rpe_cm, r.rpe_ratio_pct, r.mean_ape_cm, r.ape_ratio_pct
        );
    }
    let _ = writeln!(out, "ratios relative to {reference}");
    out
}

/// Bar-chart data: one row per device.
pub fn format_bar_csv(reports: &[DeviceReport]) -> String {
    let mut out = String::from("device,mean_rpe_cm,mean_ape_cm,rpe_ratio_pct,ape_ratio_pct\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.device, r.mean_rpe_cm, r.mean_ape_cm, r.rpe_ratio_pct, r.ape_ratio_pct
        );
    }
    out
}

/// Devices × features matrix; missing values are left empty.
pub fn format_matrix_csv(features: &[String], rows: &[(String, Vec<Option<f64>>)]) -> String {
    let mut out = String::from("device");
    for f in features {
        out.push(',');
        out.push_str(f);
    }
    out.push('\n');
    for (device, vals) in rows {
        out.push_str(device);
        for v in vals {
            out.push(',');
            if let Some(v) = v {
                let _ = write!(out, "{v}");
            }
        }
        out.push('\n');
    }
    out
}
