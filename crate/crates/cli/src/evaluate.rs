use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use xrbench::calibration::{apply_extrinsic, calibrate_extrinsic, CalibrationOptions};
use xrbench::geometry::{GeometryError, Pose, Trajectory};
use xrbench::io::read_text;
use xrbench::metrics::{ape, rpe, ErrorSeries, ErrorStats, MetricsError};
use xrbench::report::{format_bar_csv, format_text, parse_summary_table, ratio_table, DeviceReport, DeviceSummary};

use crate::error::{CliError, CliResult};
use crate::manifest::{DeviceEntry, RunEntry, RunManifest};
use crate::{default_threads, file_stem, parallel_map, write_file, write_json, OUT_ENV};

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, required_unless_present = "from_summary")]
    pub manifest: Option<PathBuf>,
    /// Skip evaluation and build the ratio table from `device,rpe_cm,ape_cm` rows.
    #[arg(long, conflicts_with = "manifest")]
    pub from_summary: Option<PathBuf>,
    /// Reference device for ratios; defaults to the manifest's.
    #[arg(long)]
    pub reference: Option<String>,
    /// RPE segment length in meters; defaults to the manifest's.
    #[arg(long)]
    pub segment_length: Option<f64>,
    /// Calibrate devices that have no calibration file instead of assuming
    /// coincident frames.
    #[arg(long)]
    pub calibrate: bool,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, env = OUT_ENV, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub segment_length: f64,
    pub calibrate_inline: bool,
}

/// Errors of one device in one run.
#[derive(Debug, Clone)]
pub struct DeviceErrors {
    pub label: String,
    pub device: String,
    pub ape: ErrorSeries,
    pub rpe: ErrorSeries,
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub label: String,
    pub device: String,
    pub error: String,
}

/// Extrinsic for `dev`: its calibration file, an inline fit, or identity.
pub fn device_extrinsic(
    manifest: &RunManifest,
    gt: &Trajectory,
    dev: &DeviceEntry,
    est: &Trajectory,
    calibrate_inline: bool,
) -> CliResult<Pose> {
    match &dev.calibration {
        Some(p) => Ok(manifest.load_calibration(p)?.extrinsic),
        None if calibrate_inline => Ok(calibrate_extrinsic(gt, est, &CalibrationOptions::default())?.extrinsic),
        None => {
            log::info!(
                "{}: no calibration; treating rigid body and device frames as coincident",
                dev.id
            );
            Ok(Pose::identity())
        }
    }
}

/// Offset-corrected device trajectory and the ground truth moved onto it.
pub fn prepare_device(
    manifest: &RunManifest,
    gt: &Trajectory,
    dev: &DeviceEntry,
    calibrate_inline: bool,
) -> CliResult<(Trajectory, Trajectory)> {
    let est = manifest.load_device(dev)?;
    let x = device_extrinsic(manifest, gt, dev, &est, calibrate_inline)?;
    Ok((est, apply_extrinsic(gt, &x)))
}

pub fn evaluate_device(
    manifest: &RunManifest,
    run: &RunEntry,
    gt: &Trajectory,
    dev: &DeviceEntry,
    opts: EvalOptions,
) -> CliResult<DeviceErrors> {
    let (est, gt_dev) = prepare_device(manifest, gt, dev, opts.calibrate_inline)?;
    let ape = ape(&est, &gt_dev).map_err(|e| match e {
        MetricsError::Geometry(GeometryError::Degenerate(_)) => CliError::runtime(format!(
            "{e}; a noise-free straight-line path leaves the alignment rotation about that line undetermined"
        )),
        e => e.into(),
    })?;
    Ok(DeviceErrors {
        label: run.label.clone(),
        device: dev.id.clone(),
        ape,
        rpe: rpe(&est, &gt_dev, opts.segment_length)?,
    })
}

/// Every (run, device) pair, evaluated concurrently, in manifest order.
pub fn evaluate_all(manifest: &RunManifest, opts: EvalOptions, threads: usize) -> Vec<Result<DeviceErrors, Failure>> {
    let gts: Vec<CliResult<Trajectory>> = manifest.runs.iter().map(|r| manifest.load_ground_truth(r)).collect();
    let jobs: Vec<(usize, usize)> = manifest
        .runs
        .iter()
        .enumerate()
        .flat_map(|(i, r)| (0..r.devices.len()).map(move |j| (i, j)))
        .collect();
    parallel_map(&jobs, threads, |&(i, j)| {
        let run = &manifest.runs[i];
        let dev = &run.devices[j];
        let res = match &gts[i] {
            Ok(gt) => evaluate_device(manifest, run, gt, dev, opts),
            Err(e) => Err(CliError::runtime(format!("ground truth: {e}"))),
        };
        res.map_err(|e| Failure {
            label: run.label.clone(),
            device: dev.id.clone(),
            error: e.to_string(),
        })
    })
}

/// Per-device mean over runs of each run's mean error.
pub fn summarize(results: &[DeviceErrors], order: &[String]) -> Vec<DeviceSummary> {
    order
        .iter()
        .filter_map(|id| {
            let mine: Vec<&DeviceErrors> = results.iter().filter(|r| &r.device == id).collect();
            if mine.is_empty() {
                return None;
            }
            let n = mine.len() as f64;
            Some(DeviceSummary {
                device: id.clone(),
                mean_rpe: mine.iter().map(|r| r.rpe.stats().mean).sum::<f64>() / n,
                mean_ape: mine.iter().map(|r| r.ape.stats().mean).sum::<f64>() / n,
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct RunStats<'a> {
    label: &'a str,
    device: &'a str,
    ape: ErrorStats,
    rpe: ErrorStats,
}

#[derive(Debug, Serialize)]
struct EvaluationReport<'a> {
    reference_device: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    segment_length: Option<f64>,
    devices: &'a [DeviceReport],
    #[serde(skip_serializing_if = "Vec::is_empty")]
    runs: Vec<RunStats<'a>>,
    #[serde(skip_serializing_if = "<[Failure]>::is_empty")]
    failures: &'a [Failure],
}

fn write_reports(
    out: &Path,
    reference: &str,
    segment_length: Option<f64>,
    reports: &[DeviceReport],
    results: &[DeviceErrors],
    failures: &[Failure],
) -> CliResult<()> {
    let doc = EvaluationReport {
        reference_device: reference,
        segment_length,
        devices: reports,
        runs: results
            .iter()
            .map(|r| RunStats {
                label: &r.label,
                device: &r.device,
                ape: *r.ape.stats(),
                rpe: *r.rpe.stats(),
            })
            .collect(),
        failures,
    };
    write_json(&out.join("report.json"), &doc)?;
    write_file(&out.join("report.txt"), &format_text(reports, reference))?;
    write_file(&out.join("error_bars.csv"), &format_bar_csv(reports))
}

fn from_summary(a: &EvaluateArgs, path: &Path) -> CliResult<()> {
    let summaries = parse_summary_table(&read_text(path)?)?;
    let reference = a
        .reference
        .clone()
        .ok_or_else(|| CliError::usage("--from-summary needs --reference"))?;
    let reports = ratio_table(&summaries, &reference)?;
    write_reports(&a.out, &reference, None, &reports, &[], &[])?;
    print!("{}", format_text(&reports, &reference));
    Ok(())
}

pub fn run(a: &EvaluateArgs) -> CliResult<()> {
    if let Some(p) = &a.from_summary {
        return from_summary(a, p);
    }
    let manifest = RunManifest::load(a.manifest.as_deref().expect("clap enforces manifest"))?;
    let segment_length = a.segment_length.unwrap_or(manifest.segment_length);
    if !(segment_length > 0.0) {
        return Err(CliError::usage("segment length must be positive"));
    }
    let order = manifest.device_ids();
    let reference = a
        .reference
        .clone()
        .or_else(|| manifest.reference_device.clone())
        .unwrap_or_else(|| order[0].clone());
    if !order.contains(&reference) {
        return Err(CliError::usage(format!(
            "reference device {reference:?} is not in the manifest"
        )));
    }
    let opts = EvalOptions {
        segment_length,
        calibrate_inline: a.calibrate,
    };
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for r in evaluate_all(&manifest, opts, a.threads.unwrap_or_else(default_threads)) {
        match r {
            Ok(d) => ok.push(d),
            Err(f) => {
                eprintln!("{} / {}: {}", f.label, f.device, f.error);
                failures.push(f);
            }
        }
    }
    for d in &ok {
        let stem = format!("{}_", file_stem(&d.device));
        let dir = a.out.join("series").join(file_stem(&d.label));
        d.ape.save(&dir, &format!("{stem}ape"))?;
        d.rpe.save(&dir, &format!("{stem}rpe"))?;
    }
    if ok.is_empty() {
        return Err(CliError::runtime("every device evaluation failed"));
    }
    let summaries = summarize(&ok, &order);
    if !summaries.iter().any(|s| s.device == reference) {
        return Err(CliError::runtime(format!(
            "reference device {reference:?} could not be evaluated"
        )));
    }
    let reports = ratio_table(&summaries, &reference)?;
    write_reports(&a.out, &reference, Some(segment_length), &reports, &ok, &failures)?;
    print!("{}", format_text(&reports, &reference));
    Ok(())
}
