//! Experiment bundle description. Paths are relative to the manifest file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use xrbench::calibration::ExtrinsicResult;
use xrbench::geometry::Trajectory;
use xrbench::io::{read_imu, read_text, read_trajectory, read_trajectory_mapped, ColumnMap, ImuSample};
use xrbench::metrics::DEFAULT_SEGMENT_LENGTH;
use xrbench::timesync::{apply_offset, ClockOffsetEstimate};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceEntry {
    pub id: String,
    pub trajectory: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_map: Option<PathBuf>,
    /// Clock offset record `delta_s,jitter_std_s,n_samples`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<PathBuf>,
    /// Extrinsic calibration result (JSON).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imu: Option<PathBuf>,
    /// Frame index `timestamp,filename`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<PathBuf>,
    /// Precomputed per-frame feature table; preferred over `frames`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    /// Condition label such as `R-FL` or `S-FR`; free-form labels are allowed.
    pub label: String,
    pub ground_truth: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_map: Option<PathBuf>,
    pub devices: Vec<DeviceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyEntry {
    pub reference: String,
    pub target: String,
    /// Calibration of the target against the reference device (JSON).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mount: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_device: Option<String>,
    #[serde(default = "default_segment")]
    pub segment_length: f64,
    pub runs: Vec<RunEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_study: Option<CaseStudyEntry>,
    /// Directory the relative paths resolve against; not serialized.
    #[serde(skip)]
    pub base: PathBuf,
}

fn default_segment() -> f64 {
    DEFAULT_SEGMENT_LENGTH
}

/// Motion and visual condition parsed from a standard label.
pub fn parse_label(label: &str) -> Option<(&'static str, &'static str)> {
    let (m, v) = label.split_once('-')?;
    let motion = match m {
        "R" => "Rotate",
        "S" => "Shift",
        "I" => "Inspect",
        "P" => "Patrol",
        _ => return None,
    };
    let visual = match v {
        "FL" => "Featureless",
        "FR" => "Feature-rich",
        _ => return None,
    };
    Some((motion, visual))
}

/// Grouping key for per-motion summaries: the motion name for standard
/// labels, else the label itself.
pub fn motion_group(label: &str) -> String {
    parse_label(label).map_or_else(|| label.to_string(), |(m, _)| m.to_string())
}

impl RunManifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = read_text(path)?;
        let mut m: RunManifest =
            serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        m.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if !(self.segment_length > 0.0) {
            return Err(CliError::usage(format!(
                "segment_length {} must be positive",
                self.segment_length
            )));
        }
        if self.runs.is_empty() {
            return Err(CliError::usage("manifest has no runs"));
        }
        let mut missing = Vec::new();
        let mut check = |p: &Path| {
            let full = self.resolve(p);
            if !full.is_file() {
                missing.push(full.display().to_string());
            }
        };
        for run in &self.runs {
            if run.label.trim().is_empty() {
                return Err(CliError::usage("run label must not be empty"));
            }
            if parse_label(&run.label).is_none() {
                log::debug!("run label {:?} is not a standard condition id", run.label);
            }
            check(&run.ground_truth);
            run.column_map.as_deref().map(&mut check);
            let mut ids = std::collections::HashSet::new();
            for d in &run.devices {
                if !ids.insert(d.id.as_str()) {
                    return Err(CliError::usage(format!(
                        "duplicate device {:?} in run {:?}",
                        d.id, run.label
                    )));
                }
                check(&d.trajectory);
                for p in [&d.column_map, &d.offset, &d.calibration, &d.imu, &d.frames, &d.features]
                    .into_iter()
                    .flatten()
                {
                    check(p);
                }
            }
        }
        if let Some(mount) = self.case_study.as_ref().and_then(|c| c.mount.as_ref()) {
            check(mount);
        }
        if !missing.is_empty() {
            return Err(CliError::usage(format!(
                "manifest references missing files: {}",
                missing.join(", ")
            )));
        }
        Ok(())
    }

    /// Device ids in first-seen order across runs.
    pub fn device_ids(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for d in self.runs.iter().flat_map(|r| &r.devices) {
            if !out.contains(&d.id) {
                out.push(d.id.clone());
            }
        }
        out
    }

    fn column_map(&self, p: &Option<PathBuf>) -> CliResult<Option<ColumnMap>> {
        match p {
            None => Ok(None),
            Some(p) => {
                let full = self.resolve(p);
                let text = read_text(&full)?;
                Ok(Some(
                    ColumnMap::from_json(&text).map_err(|e| CliError::usage(format!("{}: {e}", full.display())))?,
                ))
            }
        }
    }

    pub fn load_ground_truth(&self, run: &RunEntry) -> CliResult<Trajectory> {
        let path = self.resolve(&run.ground_truth);
        let t = match self.column_map(&run.column_map)? {
            Some(m) => read_trajectory_mapped(&path, &m),
            None => read_trajectory(&path),
        };
        t.map_err(|e| CliError::from(e).context(path.display()))
    }

    pub fn load_offset(&self, dev: &DeviceEntry) -> CliResult<Option<ClockOffsetEstimate>> {
        dev.offset
            .as_ref()
            .map(|p| {
                let full = self.resolve(p);
                ClockOffsetEstimate::load(&full).map_err(|e| CliError::from(e).context(full.display()))
            })
            .transpose()
    }

    /// Device trajectory on the reference clock.
    pub fn load_device(&self, dev: &DeviceEntry) -> CliResult<Trajectory> {
        let path = self.resolve(&dev.trajectory);
        let raw = match self.column_map(&dev.column_map)? {
            Some(m) => read_trajectory_mapped(&path, &m),
            None => read_trajectory(&path),
        }
        .map_err(|e| CliError::from(e).context(path.display()))?;
        Ok(match self.load_offset(dev)? {
            Some(o) => apply_offset(&raw, &o),
            None => raw,
        })
    }

    /// Device IMU on the reference clock.
    pub fn load_imu(&self, dev: &DeviceEntry) -> CliResult<Option<Vec<ImuSample>>> {
        let Some(p) = &dev.imu else { return Ok(None) };
        let full = self.resolve(p);
        let mut imu = read_imu(&full).map_err(|e| CliError::from(e).context(full.display()))?;
        if let Some(o) = self.load_offset(dev)? {
            imu.iter_mut().for_each(|s| s.timestamp -= o.delta);
        }
        Ok(Some(imu))
    }

    pub fn load_calibration(&self, p: &Path) -> CliResult<ExtrinsicResult> {
        let full = self.resolve(p);
        ExtrinsicResult::load(&full).map_err(|e| CliError::from(e).context(full.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(parse_label("R-FL"), Some(("Rotate", "Featureless")));
        assert_eq!(parse_label("P-FR"), Some(("Patrol", "Feature-rich")));
        assert_eq!(parse_label("walk"), None);
        assert_eq!(motion_group("I-FL"), "Inspect");
        assert_eq!(motion_group("custom"), "custom");
    }

    #[test]
    fn missing_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(
            &path,
            r#"{"runs":[{"label":"R-FL","ground_truth":"gt.csv","devices":[{"id":"a","trajectory":"a.csv"}]}]}"#,
        )
        .unwrap();
        let err = RunManifest::load(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("gt.csv"));
    }

    #[test]
    fn defaults_and_round_trip() {
        let m: RunManifest = serde_json::from_str(
            r#"{"runs":[{"label":"x","ground_truth":"gt.csv","devices":[{"id":"a","trajectory":"a.csv","extra":1}]}],"notes":"free"}"#,
        )
        .unwrap();
        assert_eq!(m.segment_length, DEFAULT_SEGMENT_LENGTH);
        let back: RunManifest = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }
}
