//! `xrbench` command implementations. `main.rs` only parses and dispatches.

pub mod calibrate;
pub mod case_study;
pub mod correlate;
pub mod error;
pub mod evaluate;
pub mod manifest;
pub mod simulate;
pub mod sync;

use std::path::Path;

use clap::{Parser, Subcommand};

pub use error::{CliError, CliResult, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};

/// Environment variable holding the default output directory.
pub const OUT_ENV: &str = "XRBENCH_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "xrbench",
    version,
    about = "Tracking-accuracy benchmark for XR headsets against motion capture"
)]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic ground truth, degraded estimate and IMU stream.
    Simulate(simulate::SimulateArgs),
    /// Clock-offset server, client and offline applier.
    #[command(subcommand)]
    Sync(sync::SyncCommand),
    /// Estimate the rigid-body → device extrinsic from two trajectories.
    Calibrate(calibrate::CalibrateArgs),
    /// APE/RPE per device and the ratio table against a reference device.
    Evaluate(evaluate::EvaluateArgs),
    /// Pearson correlation of frame and IMU features with pose error.
    Correlate(correlate::CorrelateArgs),
    /// Agreement of device-as-reference errors with mocap-based errors.
    CaseStudy(case_study::CaseStudyArgs),
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => simulate::run(&a),
        Command::Sync(c) => sync::run(&c),
        Command::Calibrate(a) => calibrate::run(&a),
        Command::Evaluate(a) => evaluate::run(&a),
        Command::Correlate(a) => correlate::run(&a),
        Command::CaseStudy(a) => case_study::run(&a),
    }
}

/// Writes `text` atomically, creating parent directories.
pub(crate) fn write_file(path: &Path, text: &str) -> CliResult<()> {
    xrbench::io::write_atomic(path, text.as_bytes()).map_err(CliError::from)
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    write_file(path, &s)
}

/// Keeps device ids and labels safe as file-name components.
pub(crate) fn file_stem(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub(crate) fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(4, |n| n.get())
}

/// Runs `jobs` on up to `threads` scoped workers, keeping input order.
pub(crate) fn parallel_map<T: Sync, R: Send>(jobs: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if jobs.is_empty() {
        return Vec::new();
    }
    let chunk = jobs.len().div_ceil(threads.max(1));
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                s.spawn(move || part.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}
