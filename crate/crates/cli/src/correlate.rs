use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;

use xrbench::features::{
    aggregate_to_windows, concat_windows, correlate_windows, extract_frame_features, imu_features, AxisMap,
    CorrelationReport, FeatureTable, WindowTable, FRAME_FEATURE_NAMES, IMU_FEATURE_NAMES,
};
use xrbench::io::{read_frame_features, read_frame_index, resolve_frames, write_frame_features, FrameFeatures};
use xrbench::metrics::{ape, rpe, ErrorSeries};
use xrbench::synth::GRAVITY;

use crate::error::{CliError, CliResult};
use crate::evaluate::prepare_device;
use crate::manifest::{DeviceEntry, RunEntry, RunManifest};
use crate::{default_threads, file_stem, parallel_map, write_file, write_json, OUT_ENV};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Rpe,
    Ape,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = Metric::Rpe)]
    pub metric: Metric,
    /// Sensor axes feeding right, up, front, e.g. `+x,+y,-z`.
    #[arg(long, default_value = "+x,+y,-z")]
    pub axis_map: String,
    /// Subtract static gravity from the up acceleration before magnitudes.
    #[arg(long)]
    pub remove_gravity: bool,
    #[arg(long)]
    pub segment_length: Option<f64>,
    #[arg(long)]
    pub calibrate: bool,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, env = OUT_ENV, default_value = ".")]
    pub out: PathBuf,
}

/// Windows of one (run, device) for the frame and IMU tables.
struct DeviceWindows {
    device: String,
    frames: Option<WindowTable>,
    imu: Option<WindowTable>,
}

fn frame_table(
    manifest: &RunManifest,
    run: &RunEntry,
    dev: &DeviceEntry,
    out: &std::path::Path,
    threads: usize,
) -> CliResult<Option<FeatureTable>> {
    let mut rows: Vec<FrameFeatures> = if let Some(p) = &dev.features {
        read_frame_features(&manifest.resolve(p))?
    } else if let Some(p) = &dev.frames {
        let index = manifest.resolve(p);
        let base = index.parent().map(PathBuf::from).unwrap_or_default();
        let frames = resolve_frames(&read_frame_index(&index)?, &base)?;
        let rows = extract_frame_features(&frames, threads)?;
        let path = out
            .join("features")
            .join(file_stem(&run.label))
            .join(format!("{}.csv", file_stem(&dev.id)));
        write_frame_features(&path, &rows)?;
        rows
    } else {
        return Ok(None);
    };
    if let Some(o) = manifest.load_offset(dev)? {
        rows.iter_mut().for_each(|r| r.timestamp -= o.delta);
    }
    Ok(Some(FeatureTable::from_frames(&rows)))
}

fn device_windows(
    manifest: &RunManifest,
    run: &RunEntry,
    dev: &DeviceEntry,
    a: &CorrelateArgs,
    axis_map: &AxisMap,
    segment_length: f64,
) -> CliResult<DeviceWindows> {
    let gt = manifest.load_ground_truth(run)?;
    let (est, gt_dev) = prepare_device(manifest, &gt, dev, a.calibrate)?;
    let series: ErrorSeries = match a.metric {
        Metric::Rpe => rpe(&est, &gt_dev, segment_length)?,
        Metric::Ape => ape(&est, &gt_dev)?,
    };
    let frames = frame_table(manifest, run, dev, &a.out, 1)?
        .map(|t| aggregate_to_windows(&t, &series))
        .transpose()?;
    let imu = match manifest.load_imu(dev)? {
        Some(samples) => {
            let f = imu_features(&samples, axis_map, a.remove_gravity.then_some(GRAVITY))?;
            Some(aggregate_to_windows(&FeatureTable::from_imu(&f), &series)?)
        }
        None => None,
    };
    Ok(DeviceWindows {
        device: dev.id.clone(),
        frames,
        imu,
    })
}

#[derive(Debug, Serialize)]
struct DeviceCorrelation<'a> {
    device: &'a str,
    metric: &'a str,
    report: &'a CorrelationReport,
}

pub fn run(a: &CorrelateArgs) -> CliResult<()> {
    let manifest = RunManifest::load(&a.manifest)?;
    let axis_map: AxisMap = a.axis_map.parse()?;
    let segment_length = a.segment_length.unwrap_or(manifest.segment_length);
    let jobs: Vec<(&RunEntry, &DeviceEntry)> = manifest
        .runs
        .iter()
        .flat_map(|r| r.devices.iter().map(move |d| (r, d)))
        .collect();
    let results = parallel_map(&jobs, a.threads.unwrap_or_else(default_threads), |(r, d)| {
        device_windows(&manifest, r, d, a, &axis_map, segment_length)
            .map_err(|e| e.context(format!("{} / {}", r.label, d.id)))
    });
    let mut windows = Vec::new();
    for r in results {
        windows.push(r?);
    }

    let names: Vec<String> = FRAME_FEATURE_NAMES
        .iter()
        .chain(IMU_FEATURE_NAMES.iter())
        .map(|s| s.to_string())
        .collect();
    let metric = match a.metric {
        Metric::Rpe => "rpe",
        Metric::Ape => "ape",
    };
    let mut matrix = Vec::new();
    for id in manifest.device_ids() {
        let mine: Vec<&DeviceWindows> = windows.iter().filter(|w| w.device == id).collect();
        let mut report = CorrelationReport::default();
        let pickers: [fn(&DeviceWindows) -> Option<WindowTable>; 2] = [|w| w.frames.clone(), |w| w.imu.clone()];
        for pick in pickers {
            let parts: Vec<WindowTable> = mine.iter().filter_map(|w| pick(w)).collect();
            if !parts.is_empty() {
                report
                    .entries
                    .extend(correlate_windows(&concat_windows(&parts)?)?.entries);
            }
        }
        if report.entries.is_empty() {
            log::warn!("{id}: no frame or IMU features to correlate");
        }
        write_json(
            &a.out.join(format!("correlation_{}.json", file_stem(&id))),
            &DeviceCorrelation {
                device: &id,
                metric,
                report: &report,
            },
        )?;
        println!("{id} ({metric})");
        for e in &report.entries {
            match e.pearson_r {
                Some(r) => println!("  {:<14} {:>7.3}  n={}", e.name, r, e.n),
                None => println!("  {:<14} {:>7}  n={} ({:?})", e.name, "-", e.n, e.status),
            }
        }
        matrix.push((id.clone(), names.iter().map(|n| report.r(n)).collect()));
    }
    if windows.is_empty() {
        return Err(CliError::runtime("no devices to correlate"));
    }
    write_file(
        &a.out.join("correlation_matrix.csv"),
        &xrbench::report::format_matrix_csv(&names, &matrix),
    )
}
