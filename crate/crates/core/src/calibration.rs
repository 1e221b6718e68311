//! Extrinsic calibration between a mocap rigid body and a tracked device.
//!
//! Model: `est_t ≈ Y ∘ gt_t ∘ X`, with `X` the fixed rigid-body → device
//! transform and `Y` the mocap world → device world alignment. Starting from
//! `X = I` and `Y` from rigid point alignment, each iteration takes a damped
//! Gauss-Newton step on the translation residual jointly over `Y` and `X`'s
//! translation, then sets `X`'s rotation to the chordal quaternion mean of
//! `R_gtᵀ R_Yᵀ R_est`. `X`'s rotation does not enter the translation
//! residual, and rejected steps raise the damping, so the residual never
//! increases.

use std::path::Path;

use nalgebra::{Matrix3, SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{umeyama_align_points, GeometryError, Pose, Trajectory, UnitQuat, Vec3};
use crate::io::{read_text, write_atomic, IoError};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("trajectories do not overlap in time")]
    NoOverlap,
    #[error("only {got} associated pairs, need {needed}")]
    InsufficientPairs { got: usize, needed: usize },
    #[error("insufficient rotational excitation: {0}")]
    InsufficientExcitation(String),
    #[error("did not converge in {iterations} iterations (residual {residual_rmse} m)")]
    NotConverged { iterations: usize, residual_rmse: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("calibration file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub max_iterations: usize,
    /// Stop once the combined SE(3) update of X and Y (radians + meters) is below this.
    pub step_tolerance: f64,
    pub min_pairs: usize,
    /// Minimum largest pairwise geodesic angle among gt rotations, radians.
    pub min_rotation_spread: f64,
    /// Minimum RMS rotational spread about the least-excited axis. Rotations
    /// about a single axis leave the lever arm along that axis unobservable.
    pub min_axis_excitation: f64,
    /// Drop this fraction of worst pairs and refit once (e.g. 0.1).
    pub trim_fraction: Option<f64>,
    /// Return `NotConverged` instead of a flagged result.
    pub require_convergence: bool,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            max_iterations: 100,
            step_tolerance: 1e-9,
            min_pairs: 50,
            min_rotation_spread: 10f64.to_radians(),
            min_axis_excitation: 1e-3,
            trim_fraction: None,
            require_convergence: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicResult {
    /// Rigid body → device.
    pub extrinsic: Pose,
    /// Mocap world → device world.
    pub world_alignment: Pose,
    pub residual_rmse: f64,
    pub rotation_residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    pub pairs: usize,
    /// Translation RMSE after each iteration.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub residual_history: Vec<f64>,
}

impl ExtrinsicResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn save(&self, path: &Path) -> Result<(), CalibrationError> {
        let mut s = self.to_json();
        s.push('\n');
        Ok(write_atomic(path, s.as_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        Ok(Self::from_json(&read_text(path)?)?)
    }
}

/// One associated pair: gt interpolated at an estimate timestamp.
#[derive(Debug, Clone, Copy)]
struct Pair {
    gt: Pose,
    est: Pose,
}

fn associate(gt: &Trajectory, est: &Trajectory) -> Result<Vec<Pair>, CalibrationError> {
    let mut out = Vec::new();
    for s in est.samples() {
        if gt.contains_time(s.timestamp) {
            out.push(Pair {
                gt: gt.interpolate_at(s.timestamp)?,
                est: s.pose,
            });
        }
    }
    if out.is_empty() {
        return Err(CalibrationError::NoOverlap);
    }
    Ok(out)
}

fn max_pairwise_angle_at_least(rots: &[UnitQuat], threshold: f64) -> bool {
    for (i, a) in rots.iter().enumerate() {
        for b in &rots[i + 1..] {
            if a.angle_to(b) >= threshold {
                return true;
            }
        }
    }
    false
}

/// RMS of `|(R_t − R̄) v|` minimized over unit `v`.
fn weakest_axis_excitation(rots: &[UnitQuat]) -> f64 {
    let mats: Vec<Matrix3<f64>> = rots.iter().map(UnitQuat::to_matrix).collect();
    let n = mats.len() as f64;
    let mean = mats.iter().sum::<Matrix3<f64>>() / n;
    let mut scatter = Matrix3::<f64>::zeros();
    for m in &mats {
        let d = m - mean;
        scatter += d.transpose() * d;
    }
    let eig = (scatter / n).symmetric_eigen();
    eig.eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
        .sqrt()
}

fn check_excitation(pairs: &[Pair], opts: &CalibrationOptions) -> Result<(), CalibrationError> {
    let rots: Vec<UnitQuat> = pairs.iter().map(|p| p.gt.rotation).collect();
    if !max_pairwise_angle_at_least(&rots, opts.min_rotation_spread) {
        return Err(CalibrationError::InsufficientExcitation(format!(
            "ground-truth orientations span less than {:.1}°",
            opts.min_rotation_spread.to_degrees()
        )));
    }
    let weakest = weakest_axis_excitation(&rots);
    if weakest < opts.min_axis_excitation {
        return Err(CalibrationError::InsufficientExcitation(format!(
            "rotation about a single axis (weakest-axis spread {weakest:.2e}); \
             the lever arm along that axis is unobservable"
        )));
    }
    Ok(())
}

fn translation_residuals(pairs: &[Pair], x: &Pose, y: &Pose) -> Vec<f64> {
    pairs
        .iter()
        .map(|p| (y.compose(&p.gt.compose(x)).translation - p.est.translation).norm())
        .collect()
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

fn fit_world(pairs: &[Pair], x: &Pose) -> Result<Pose, CalibrationError> {
    let moved: Vec<Vec3> = pairs.iter().map(|p| p.gt.compose(x).translation).collect();
    let target: Vec<Vec3> = pairs.iter().map(|p| p.est.translation).collect();
    Ok(umeyama_align_points(&target, &moved)?)
}

fn extrinsic_rotation(pairs: &[Pair], y_rot: &UnitQuat) -> UnitQuat {
    let y_inv = y_rot.inverse();
    let rels: Vec<UnitQuat> = pairs
        .iter()
        .map(|p| p.gt.rotation.inverse() * y_inv * p.est.rotation)
        .collect();
    UnitQuat::chordal_mean(&rels).unwrap_or(UnitQuat::IDENTITY)
}

fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn sum_sq(pairs: &[Pair], y: &Pose, t_x: &Vec3) -> f64 {
    pairs
        .iter()
        .map(|p| {
            let lever = p.gt.rotation.rotate(t_x) + p.gt.translation;
            (y.transform_point(&lever) - p.est.translation).norm_squared()
        })
        .sum()
}

/// One damped Gauss-Newton update of `(Y, t_X)` on the translation residual
/// `r_t = R_Y (R_gt t_X + t_gt) + t_Y − t_est`, with `R_Y` perturbed on the
/// left. Rejected steps raise the damping, so the cost never increases.
fn refine_step(pairs: &[Pair], y: &Pose, t_x: &Vec3, damping: &mut f64) -> (Pose, Vec3) {
    let mut h = SMatrix::<f64, 9, 9>::zeros();
    let mut g = SVector::<f64, 9>::zeros();
    for p in pairs {
        let lever = p.gt.rotation.rotate(t_x) + p.gt.translation;
        let world = y.rotation.rotate(&lever);
        let r = world + y.translation - p.est.translation;
        let mut j = SMatrix::<f64, 3, 9>::zeros();
        j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew(&world)));
        j.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
        j.fixed_view_mut::<3, 3>(0, 6)
            .copy_from(&(y.rotation * p.gt.rotation).to_matrix());
        h += j.transpose() * j;
        g += j.transpose() * r;
    }
    let cost = sum_sq(pairs, y, t_x);
    for _ in 0..30 {
        let mut damped = h;
        for i in 0..9 {
            damped[(i, i)] += *damping * (1.0 + h[(i, i)]);
        }
        let Some(delta) = damped.cholesky().map(|c| -c.solve(&g)) else {
            *damping *= 10.0;
            continue;
        };
        let rot = UnitQuat::exp(&Vec3::new(delta[0], delta[1], delta[2]));
        let y_new = Pose::new(
            rot * y.rotation,
            y.translation + Vec3::new(delta[3], delta[4], delta[5]),
        );
        let t_new = t_x + Vec3::new(delta[6], delta[7], delta[8]);
        if sum_sq(pairs, &y_new, &t_new) <= cost {
            *damping = (*damping * 0.1).max(1e-12);
            return (y_new, t_new);
        }
        *damping *= 10.0;
    }
    (*y, *t_x)
}

fn step_size(a: &Pose, b: &Pose) -> f64 {
    let (ang, tr) = a.distance(b);
    ang + tr
}

struct Solution {
    x: Pose,
    y: Pose,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
}

fn solve(pairs: &[Pair], x0: Pose, y0: Option<Pose>, opts: &CalibrationOptions) -> Result<Solution, CalibrationError> {
    let mut x = x0;
    let mut y = match y0 {
        Some(y) => y,
        None => fit_world(pairs, &x)?,
    };
    let mut damping = 1e-6;
    let mut history = Vec::new();
    for it in 1..=opts.max_iterations {
        let (y_new, t_x) = refine_step(pairs, &y, &x.translation, &mut damping);
        let x_new = Pose::new(extrinsic_rotation(pairs, &y_new.rotation), t_x);
        let step = step_size(&x, &x_new) + step_size(&y, &y_new);
        x = x_new;
        y = y_new;
        history.push(rms(translation_residuals(pairs, &x, &y).into_iter()));
        if step < opts.step_tolerance {
            return Ok(Solution {
                x,
                y,
                iterations: it,
                converged: true,
                history,
            });
        }
    }
    Ok(Solution {
        x,
        y,
        iterations: opts.max_iterations,
        converged: false,
        history,
    })
}

/// Estimates `X` (rigid body → device) and `Y` (mocap world → device world)
/// from a ground-truth trajectory and a device trajectory on a shared clock.
/// The ground truth is interpolated at each device timestamp.
pub fn calibrate_extrinsic(
    gt: &Trajectory,
    est: &Trajectory,
    opts: &CalibrationOptions,
) -> Result<ExtrinsicResult, CalibrationError> {
    let mut pairs = associate(gt, est)?;
    if pairs.len() < opts.min_pairs {
        return Err(CalibrationError::InsufficientPairs {
            got: pairs.len(),
            needed: opts.min_pairs,
        });
    }
    check_excitation(&pairs, opts)?;

    let mut sol = solve(&pairs, Pose::identity(), None, opts)?;

    if let Some(frac) = opts.trim_fraction.filter(|f| *f > 0.0 && *f < 1.0) {
        let res = translation_residuals(&pairs, &sol.x, &sol.y);
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.sort_by(|&a, &b| res[a].total_cmp(&res[b]));
        let keep = ((pairs.len() as f64) * (1.0 - frac)).ceil() as usize;
        let mut kept: Vec<usize> = order[..keep.max(3)].to_vec();
        kept.sort_unstable();
        pairs = kept.into_iter().map(|i| pairs[i]).collect();
        let refit = solve(&pairs, sol.x, Some(sol.y), opts)?;
        sol = Solution {
            iterations: (sol.iterations + refit.iterations).min(opts.max_iterations),
            history: sol.history.into_iter().chain(refit.history).collect(),
            ..refit
        };
    }

    let residual_rmse = rms(translation_residuals(&pairs, &sol.x, &sol.y).into_iter());
    let rotation_residual_rms = rms(pairs
        .iter()
        .map(|p| sol.y.compose(&p.gt.compose(&sol.x)).rotation.angle_to(&p.est.rotation)));

    if !sol.converged {
        if opts.require_convergence {
            return Err(CalibrationError::NotConverged {
                iterations: sol.iterations,
                residual_rmse,
            });
        }
        log::warn!(
            "extrinsic calibration stopped after {} iterations without converging (residual {:.3e} m)",
            sol.iterations,
            residual_rmse
        );
    }

    Ok(ExtrinsicResult {
        extrinsic: sol.x,
        world_alignment: sol.y,
        residual_rmse,
        rotation_residual_rms,
        iterations: sol.iterations,
        converged: sol.converged,
        pairs: pairs.len(),
        residual_history: sol.history,
    })
}

/// Re-expresses a rigid-body trajectory at the device center: each pose
/// becomes `pose ∘ X`.
pub fn apply_extrinsic(gt: &Trajectory, x: &Pose) -> Trajectory {
    let mut out = gt.map_poses(|p| p.compose(x));
    let world = out.world_frame().to_string();
    out.set_frames(world, "device");
    out
}
