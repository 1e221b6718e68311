use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use xrbench::metrics::{ape, pair_series, r_squared, rpe, substitute_reference, ErrorSeries};

use crate::error::{CliError, CliResult};
use crate::evaluate::prepare_device;
use crate::manifest::{motion_group, RunEntry, RunManifest};
use crate::{write_file, write_json, OUT_ENV};

#[derive(Debug, Args)]
pub struct CaseStudyArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub segment_length: Option<f64>,
    #[arg(long)]
    pub calibrate: bool,
    #[arg(long, env = OUT_ENV, default_value = ".")]
    pub out: PathBuf,
}

/// Target errors measured against mocap and against the substituted reference.
#[derive(Debug, Clone)]
pub struct RunComparison {
    pub label: String,
    pub mocap_ape: ErrorSeries,
    pub mocap_rpe: ErrorSeries,
    pub pseudo_ape: ErrorSeries,
    pub pseudo_rpe: ErrorSeries,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Agreement {
    pub r2_rpe: Option<f64>,
    pub r2_ape: Option<f64>,
    pub n_rpe: usize,
    pub n_ape: usize,
}

#[derive(Debug, Default)]
struct Pooled {
    rpe: (Vec<f64>, Vec<f64>),
    ape: (Vec<f64>, Vec<f64>),
}

impl Pooled {
    fn add(&mut self, c: &RunComparison) {
        let (a, b) = pair_series(&c.mocap_rpe, &c.pseudo_rpe);
        self.rpe.0.extend(a);
        self.rpe.1.extend(b);
        let (a, b) = pair_series(&c.mocap_ape, &c.pseudo_ape);
        self.ape.0.extend(a);
        self.ape.1.extend(b);
    }

    fn agreement(&self) -> Agreement {
        Agreement {
            r2_rpe: r_squared(&self.rpe.0, &self.rpe.1).ok(),
            r2_ape: r_squared(&self.ape.0, &self.ape.1).ok(),
            n_rpe: self.rpe.0.len(),
            n_ape: self.ape.0.len(),
        }
    }
}

pub fn compare_run(
    manifest: &RunManifest,
    run: &RunEntry,
    reference: &str,
    target: &str,
    mount: &xrbench::geometry::Pose,
    segment_length: f64,
    calibrate_inline: bool,
) -> CliResult<Option<RunComparison>> {
    let (Some(r), Some(t)) = (
        run.devices.iter().find(|d| d.id == reference),
        run.devices.iter().find(|d| d.id == target),
    ) else {
        return Ok(None);
    };
    let gt = manifest.load_ground_truth(run)?;
    let (target_est, gt_target) = prepare_device(manifest, &gt, t, calibrate_inline)?;
    let ref_est = manifest.load_device(r)?;
    let sub = substitute_reference(&ref_est, mount, &target_est, segment_length)?;
    Ok(Some(RunComparison {
        label: run.label.clone(),
        mocap_ape: ape(&target_est, &gt_target)?,
        mocap_rpe: rpe(&target_est, &gt_target, segment_length)?,
        pseudo_ape: sub.ape,
        pseudo_rpe: sub.rpe,
    }))
}

#[derive(Debug, Serialize)]
struct LabeledAgreement {
    label: String,
    #[serde(flatten)]
    agreement: Agreement,
}

#[derive(Debug, Serialize)]
struct CaseStudyReport {
    reference: String,
    target: String,
    segment_length: f64,
    runs: Vec<LabeledAgreement>,
    motions: Vec<LabeledAgreement>,
    pooled: Agreement,
}

fn fmt_r2(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

pub fn run(a: &CaseStudyArgs) -> CliResult<()> {
    let manifest = RunManifest::load(&a.manifest)?;
    let cs = manifest
        .case_study
        .clone()
        .ok_or_else(|| CliError::usage("manifest has no `case_study` block naming the reference and target devices"))?;
    let mount_path = cs.mount.clone().ok_or_else(|| {
        CliError::usage(format!(
            "case study needs a mount calibration between {r} and {t}: run `xrbench calibrate --gt <{r} trajectory> --est <{t} trajectory>` and set `case_study.mount` to the resulting JSON",
            r = cs.reference,
            t = cs.target
        ))
    })?;
    let mount = manifest.load_calibration(&mount_path)?.extrinsic;
    let segment_length = a.segment_length.unwrap_or(manifest.segment_length);

    let mut comparisons = Vec::new();
    for run in &manifest.runs {
        if let Some(c) = compare_run(
            &manifest,
            run,
            &cs.reference,
            &cs.target,
            &mount,
            segment_length,
            a.calibrate,
        )
        .map_err(|e| e.context(&run.label))?
        {
            comparisons.push(c);
        }
    }
    if comparisons.is_empty() {
        return Err(CliError::usage(format!(
            "no run contains both {} and {}",
            cs.reference, cs.target
        )));
    }

    let mut pooled = Pooled::default();
    let mut motions: BTreeMap<String, Pooled> = BTreeMap::new();
    let mut runs = Vec::new();
    for c in &comparisons {
        let mut one = Pooled::default();
        one.add(c);
        runs.push(LabeledAgreement {
            label: c.label.clone(),
            agreement: one.agreement(),
        });
        motions.entry(motion_group(&c.label)).or_default().add(c);
        pooled.add(c);
    }
    let report = CaseStudyReport {
        reference: cs.reference.clone(),
        target: cs.target.clone(),
        segment_length,
        runs,
        motions: motions
            .iter()
            .map(|(k, v)| LabeledAgreement {
                label: k.clone(),
                agreement: v.agreement(),
            })
            .collect(),
        pooled: pooled.agreement(),
    };

    let mut text = format!("{} as reference for {}\n", cs.reference, cs.target);
    let _ = writeln!(text, "{:<16} {:>8} {:>8}", "", "R2 RPE", "R2 APE");
    for l in report.runs.iter().chain(&report.motions) {
        let _ = writeln!(
            text,
            "{:<16} {:>8} {:>8}",
            l.label,
            fmt_r2(l.agreement.r2_rpe),
            fmt_r2(l.agreement.r2_ape)
        );
    }
    let _ = writeln!(
        text,
        "{:<16} {:>8} {:>8}",
        "pooled",
        fmt_r2(report.pooled.r2_rpe),
        fmt_r2(report.pooled.r2_ape)
    );
    write_json(&a.out.join("case_study.json"), &report)?;
    write_file(&a.out.join("case_study.txt"), &text)?;
    print!("{text}");
    Ok(())
}
