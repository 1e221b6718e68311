use std::path::{Path, PathBuf};

use clap::Args;

use xrbench::calibration::{calibrate_extrinsic, CalibrationOptions};
use xrbench::geometry::Trajectory;
use xrbench::io::{read_text, read_trajectory, read_trajectory_mapped, ColumnMap};
use xrbench::timesync::{apply_offset, ClockOffsetEstimate};

use crate::error::{CliError, CliResult};
use crate::OUT_ENV;

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Mocap rigid-body trajectory.
    #[arg(long)]
    pub gt: PathBuf,
    /// Device trajectory.
    #[arg(long)]
    pub est: PathBuf,
    #[arg(long)]
    pub gt_column_map: Option<PathBuf>,
    #[arg(long)]
    pub est_column_map: Option<PathBuf>,
    /// Clock offset record applied to the device trajectory first.
    #[arg(long)]
    pub offset: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 50)]
    pub min_pairs: usize,
    /// Drop this fraction of worst pairs and refit once.
    #[arg(long)]
    pub trim: Option<f64>,
    /// Fail instead of warning when the solver does not converge.
    #[arg(long)]
    pub require_convergence: bool,
    /// Result path; defaults to `calibration.json` in the output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, env = OUT_ENV, default_value = ".")]
    pub out: PathBuf,
}

pub(crate) fn load_trajectory(path: &Path, map: Option<&Path>) -> CliResult<Trajectory> {
    let t = match map {
        Some(m) => {
            let map =
                ColumnMap::from_json(&read_text(m)?).map_err(|e| CliError::usage(format!("{}: {e}", m.display())))?;
            read_trajectory_mapped(path, &map)
        }
        None => read_trajectory(path),
    };
    t.map_err(|e| CliError::from(e).context(path.display()))
}

pub fn run(a: &CalibrateArgs) -> CliResult<()> {
    if let Some(f) = a.trim {
        if !(0.0..1.0).contains(&f) {
            return Err(CliError::usage(format!("--trim {f} must be in [0, 1)")));
        }
    }
    let gt = load_trajectory(&a.gt, a.gt_column_map.as_deref())?;
    let mut est = load_trajectory(&a.est, a.est_column_map.as_deref())?;
    if let Some(p) = &a.offset {
        est = apply_offset(&est, &ClockOffsetEstimate::load(p)?);
    }
    let opts = CalibrationOptions {
        max_iterations: a.max_iterations,
        min_pairs: a.min_pairs,
        trim_fraction: a.trim,
        require_convergence: a.require_convergence,
        ..CalibrationOptions::default()
    };
    let res = calibrate_extrinsic(&gt, &est, &opts)?;
    let path = a.output.clone().unwrap_or_else(|| a.out.join("calibration.json"));
    res.save(&path)?;
    let t = res.extrinsic.translation;
    let q = res.extrinsic.rotation.xyzw();
    println!("extrinsic translation  [{:.6}, {:.6}, {:.6}] m", t.x, t.y, t.z);
    println!(
        "extrinsic rotation     [{:.6}, {:.6}, {:.6}, {:.6}] (x y z w)",
        q[0], q[1], q[2], q[3]
    );
    println!(
        "residual {:.3} mm, {:.4} deg over {} pairs, {} iterations{}",
        res.residual_rmse * 1e3,
        res.rotation_residual_rms.to_degrees(),
        res.pairs,
        res.iterations,
        if res.converged { "" } else { " (not converged)" }
    );
    println!("wrote {}", path.display());
    Ok(())
}
