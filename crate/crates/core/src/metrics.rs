//! Absolute and relative pose error.
//!
//! APE aligns the whole estimate once (rigid, no scale) and measures the
//! per-timestamp translation distance. RPE partitions the timeline into
//! consecutive windows of fixed ground-truth arc length and compares the
//! relative motion over each window:
//!
//! `e = ‖trans(gt_a⁻¹ ∘ gt_b) − trans(est_a⁻¹ ∘ est_b)‖`
//!
//! which equals the endpoint distance after snapping the estimate's window
//! start onto the ground truth (`gt_a ∘ est_a⁻¹ ∘ est_b` versus `gt_b`, with
//! the common rotation `R_gt_a` dropped by the norm).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{umeyama_align_points, GeometryError, Pose, Trajectory, Vec3};
use crate::io::{parse_numeric_table, write_atomic, IoError};
use crate::stats::{median_sorted, Running};

pub const DEFAULT_SEGMENT_LENGTH: f64 = 0.10;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("trajectories do not overlap in time")]
    NoOverlap,
    #[error("need at least {needed} associated pairs, got {got}")]
    TooFewPairs { needed: usize, got: usize },
    #[error("ground-truth path {length} m is shorter than one {segment} m segment")]
    TooShort { length: f64, segment: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociatedPair {
    pub timestamp: f64,
    pub gt_pose: Pose,
    pub est_pose: Pose,
}

/// One pair per estimate sample inside the ground-truth span, with the ground
/// truth interpolated at the estimate timestamp.
pub fn associate(est: &Trajectory, gt: &Trajectory) -> Result<Vec<AssociatedPair>, MetricsError> {
    let mut out = Vec::new();
    for s in est.samples() {
        if gt.contains_time(s.timestamp) {
            out.push(AssociatedPair {
                timestamp: s.timestamp,
                gt_pose: gt.interpolate_at(s.timestamp)?,
                est_pose: s.pose,
            });
        }
    }
    if out.is_empty() {
        return Err(MetricsError::NoOverlap);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Ape,
    Rpe,
}

impl std::fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ErrorKind::Ape => "ape",
            ErrorKind::Rpe => "rpe",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorPoint {
    pub timestamp: f64,
    /// Translation error, meters.
    pub error: f64,
    /// Start of the time window this error summarizes (segment start for RPE,
    /// previous sample for APE).
    pub window_start: f64,
    /// Auxiliary rotation error, radians.
    pub rotation_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: usize,
    pub mean: f64,
    pub rmse: f64,
    pub median: f64,
    pub max: f64,
}

impl ErrorStats {
    pub fn from_errors(errors: &[f64]) -> Self {
        if errors.is_empty() {
            return ErrorStats {
                count: 0,
                mean: 0.0,
                rmse: 0.0,
                median: 0.0,
                max: 0.0,
            };
        }
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        let run: Running = errors.iter().copied().collect();
        let sq: Running = errors.iter().map(|e| e * e).collect();
        ErrorStats {
            count: errors.len(),
            mean: run.mean(),
            rmse: sq.mean().sqrt(),
            median: median_sorted(&sorted),
            max: sorted[sorted.len() - 1],
        }
    }
}

/// Per-timestamp pose errors with summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    kind: ErrorKind,
    points: Vec<ErrorPoint>,
    stats: ErrorStats,
    segment_length: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct StatsDoc {
    kind: ErrorKind,
    #[serde(flatten)]
    stats: ErrorStats,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    segment_length: Option<f64>,
}

impl ErrorSeries {
    pub fn new(kind: ErrorKind, points: Vec<ErrorPoint>, segment_length: Option<f64>) -> Self {
        debug_assert!(points.iter().all(|p| p.error >= 0.0));
        let errors: Vec<f64> = points.iter().map(|p| p.error).collect();
        ErrorSeries {
            kind,
            stats: ErrorStats::from_errors(&errors),
            points,
            segment_length,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        self.kind
    }

    pub fn points(&self) -> &[ErrorPoint] {
        &self.points
    }

    pub fn stats(&self) -> &ErrorStats {
        &self.stats
    }

    pub fn segment_length(&self) -> Option<f64> {
        self.segment_length
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.error)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp,error_m\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{}", p.timestamp, p.error);
        }
        out
    }

    /// Parses `timestamp,error_m`; each window starts at the previous timestamp.
    pub fn from_csv(kind: ErrorKind, text: &str, segment_length: Option<f64>) -> Result<Self, MetricsError> {
        let rows = parse_numeric_table(text, &["timestamp", "error_m"], None)?;
        let mut points: Vec<ErrorPoint> = Vec::with_capacity(rows.len());
        for r in rows {
            let (t, e) = (r.values[0], r.values[1]);
            if e < 0.0 {
                return Err(IoError::Parse {
                    line: r.line,
                    msg: format!("negative error {e}"),
                }
                .into());
            }
            if points.last().is_some_and(|p| t <= p.timestamp) {
                return Err(IoError::NonMonotonicTimestamps { line: r.line }.into());
            }
            let window_start = points.last().map_or(t, |p| p.timestamp);
            points.push(ErrorPoint {
                timestamp: t,
                error: e,
                window_start,
                rotation_error: 0.0,
            });
        }
        Ok(ErrorSeries::new(kind, points, segment_length))
    }

    pub fn stats_json(&self) -> String {
        serde_json::to_string_pretty(&StatsDoc {
            kind: self.kind,
            stats: self.stats,
            segment_length: self.segment_length,
        })
        .expect("serializable")
    }

    /// Writes `<stem>.csv` and `<stem>.json` next to each other.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), MetricsError> {
        write_atomic(&dir.join(format!("{stem}.csv")), self.to_csv().as_bytes())?;
        let mut js = self.stats_json();
        js.push('\n');
        write_atomic(&dir.join(format!("{stem}.json")), js.as_bytes())?;
        Ok(())
    }
}

/// APE together with the rigid alignment applied to the estimate.
pub fn ape_with_alignment(est: &Trajectory, gt: &Trajectory) -> Result<(ErrorSeries, Pose), MetricsError> {
    let pairs = associate(est, gt)?;
    if pairs.len() < 3 {
        return Err(MetricsError::TooFewPairs {
            needed: 3,
            got: pairs.len(),
        });
    }
    let reference: Vec<Vec3> = pairs.iter().map(|p| p.gt_pose.translation).collect();
    let estimate: Vec<Vec3> = pairs.iter().map(|p| p.est_pose.translation).collect();
    let align = umeyama_align_points(&reference, &estimate)?;
    let mut prev = pairs[0].timestamp;
    let points = pairs
        .iter()
        .map(|p| {
            let aligned = align.compose(&p.est_pose);
            let point = ErrorPoint {
                timestamp: p.timestamp,
                error: (aligned.translation - p.gt_pose.translation).norm(),
                window_start: prev,
                rotation_error: aligned.rotation.angle_to(&p.gt_pose.rotation),
            };
            prev = p.timestamp;
            point
        })
        .collect();
    Ok((ErrorSeries::new(ErrorKind::Ape, points, None), align))
}

pub fn ape(est: &Trajectory, gt: &Trajectory) -> Result<ErrorSeries, MetricsError> {
    Ok(ape_with_alignment(est, gt)?.0)
}

/// Time at which the cumulative arc `knots` first reaches `s`.
fn time_at_arc(knots: &[(f64, f64)], s: f64) -> f64 {
    let i = knots.partition_point(|k| k.1 < s);
    if i == 0 {
        return knots[0].0;
    }
    if i == knots.len() {
        return knots[knots.len() - 1].0;
    }
    let (t0, s0) = knots[i - 1];
    let (t1, s1) = knots[i];
    t0 + (s - s0) / (s1 - s0) * (t1 - t0)
}

/// Window boundary times splitting `[t_a, t_b]` into consecutive pieces of
/// `segment` meters of ground-truth path. The trailing partial piece is dropped.
pub fn segment_boundaries(gt: &Trajectory, t_a: f64, t_b: f64, segment: f64) -> Result<Vec<f64>, MetricsError> {
    if !(segment > 0.0) {
        return Err(MetricsError::InsufficientData(format!(
            "segment length {segment} must be positive"
        )));
    }
    let knots = gt.cumulative_arc(t_a, t_b)?;
    let length = knots.last().map_or(0.0, |k| k.1);
    let count = (length / segment + 1e-9).floor() as usize;
    if count == 0 {
        return Err(MetricsError::TooShort { length, segment });
    }
    Ok((0..=count)
        .map(|k| time_at_arc(&knots, (k as f64 * segment).min(length)))
        .collect())
}

pub fn rpe(est: &Trajectory, gt: &Trajectory, segment_length: f64) -> Result<ErrorSeries, MetricsError> {
    let pairs = associate(est, gt)?;
    let t_a = pairs[0].timestamp;
    let t_b = pairs[pairs.len() - 1].timestamp;
    if pairs.len() < 2 {
        return Err(MetricsError::TooShort {
            length: 0.0,
            segment: segment_length,
        });
    }
    let bounds = segment_boundaries(gt, t_a, t_b, segment_length)?;
    let mut points = Vec::with_capacity(bounds.len() - 1);
    let mut prev_gt = gt.interpolate_at(bounds[0])?;
    let mut prev_est = est.interpolate_at(bounds[0])?;
    for w in bounds.windows(2) {
        let gt_b = gt.interpolate_at(w[1])?;
        let est_b = est.interpolate_at(w[1])?;
        let rel_gt = prev_gt.inverse().compose(&gt_b);
        let rel_est = prev_est.inverse().compose(&est_b);
        points.push(ErrorPoint {
            timestamp: w[1],
            error: (rel_gt.translation - rel_est.translation).norm(),
            window_start: w[0],
            rotation_error: rel_gt.rotation.angle_to(&rel_est.rotation),
        });
        prev_gt = gt_b;
        prev_est = est_b;
    }
    Ok(ErrorSeries::new(ErrorKind::Rpe, points, Some(segment_length)))
}

#[derive(Debug, Clone)]
pub struct Substitution {
    pub pseudo_gt: Trajectory,
    pub ape: ErrorSeries,
    pub rpe: ErrorSeries,
}

/// Evaluates `target_est` against a reference device's trajectory moved onto
/// the target's body frame: `pseudo_gt_t = ref_t ∘ mount`.
pub fn substitute_reference(
    ref_est: &Trajectory,
    mount: &Pose,
    target_est: &Trajectory,
    segment_length: f64,
) -> Result<Substitution, MetricsError> {
    let pseudo_gt = ref_est.map_poses(|p| p.compose(mount));
    let ape = ape(target_est, &pseudo_gt)?;
    let rpe = rpe(target_est, &pseudo_gt, segment_length)?;
    Ok(Substitution { pseudo_gt, ape, rpe })
}

/// Pairs each point of `a` with the nearest point of `b` within half of `a`'s
/// median sample interval.
pub fn pair_series(a: &ErrorSeries, b: &ErrorSeries) -> (Vec<f64>, Vec<f64>) {
    let ta: Vec<f64> = a.points.iter().map(|p| p.timestamp).collect();
    let tb: Vec<f64> = b.points.iter().map(|p| p.timestamp).collect();
    if ta.len() < 2 || tb.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let mut dts: Vec<f64> = ta.windows(2).map(|w| w[1] - w[0]).collect();
    dts.sort_by(f64::total_cmp);
    let tol = 0.5 * median_sorted(&dts);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for p in &a.points {
        let i = tb.partition_point(|&t| t < p.timestamp);
        let best = [i.checked_sub(1), (i < tb.len()).then_some(i)]
            .into_iter()
            .flatten()
            .min_by(|&x, &y| (tb[x] - p.timestamp).abs().total_cmp(&(tb[y] - p.timestamp).abs()));
        if let Some(j) = best {
            if (tb[j] - p.timestamp).abs() <= tol {
                xs.push(p.error);
                ys.push(b.points[j].error);
            }
        }
    }
    (xs, ys)
}

/// Coefficient of determination of the least-squares line `y ≈ α + β x`.
pub fn r_squared(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    let n = x.len().min(y.len());
    if n < 3 {
        return Err(MetricsError::InsufficientData(format!("{n} paired points, need 3")));
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x[..n].iter().zip(&y[..n]) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(MetricsError::InsufficientData("constant series".into()));
    }
    Ok((sxy * sxy / (sxx * syy)).min(1.0))
}

/// R² against the identity line `y = x` instead of a fitted line.
pub fn r_squared_identity(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    let n = x.len().min(y.len());
    if n < 3 {
        return Err(MetricsError::InsufficientData(format!("{n} paired points, need 3")));
    }
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let ss_res: f64 = x[..n].iter().zip(&y[..n]).map(|(a, b)| (b - a).powi(2)).sum();
    let ss_tot: f64 = y[..n].iter().map(|b| (b - my).powi(2)).sum();
    if ss_tot <= 0.0 {
        return Err(MetricsError::InsufficientData("constant series".into()));
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// R² of `b`'s errors regressed on `a`'s after nearest-timestamp pairing.
pub fn compare_error_series(a: &ErrorSeries, b: &ErrorSeries) -> Result<f64, MetricsError> {
    let (x, y) = pair_series(a, b);
    r_squared(&x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PoseSample, UnitQuat};

    fn straight(rate: f64, duration: f64, speed: f64) -> Trajectory {
        let n = (duration * rate).round() as usize;
        Trajectory::new(
            (0..=n)
                .map(|i| {
                    let t = i as f64 / rate;
                    PoseSample::new(t, Pose::from_translation(Vec3::new(speed * t, 0.0, 0.0)))
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn associate_cases() {
        let gt = straight(100.0, 10.0, 1.0);
        let same = associate(&gt, &gt).unwrap();
        assert!(same.iter().all(|p| p.gt_pose == p.est_pose));

        let partial = Trajectory::new(
            gt.samples()
                .iter()
                .filter(|s| (5.0..=8.0).contains(&s.timestamp))
                .copied()
                .collect(),
        )
        .unwrap();
        let pairs = associate(&gt, &partial).unwrap();
        assert!(pairs.iter().all(|p| (5.0..=8.0).contains(&p.timestamp)));

        let est90 = gt.resample((0..900).map(|i| i as f64 / 90.0)).unwrap();
        assert_eq!(associate(&est90, &gt).unwrap().len(), 900);

        assert!(matches!(
            associate(&gt.shifted(100.0), &gt),
            Err(MetricsError::NoOverlap)
        ));
    }

    #[test]
    fn ape_zero_for_identical_and_rigid_copies() {
        let gt = crate::synth::generate(
            &crate::synth::MotionSpec::new(crate::synth::MotionPattern::Inspect, 50.0).with_duration(8.0),
        )
        .unwrap();
        assert_eq!(ape(&gt, &gt).unwrap().stats().max, 0.0);
        let t = Pose::new(
            UnitQuat::from_xyzw(0.2, 0.5, -0.3, 0.7).unwrap(),
            Vec3::new(4.0, -1.0, 2.0),
        );
        let moved = gt.transformed(&t);
        assert!(ape(&moved, &gt).unwrap().stats().max < 1e-9);
    }

    #[test]
    fn ape_ramp_residual_closed_form() {
        // a gently bowed line keeps the alignment non-degenerate; with the bow
        // symmetric about the centroid the optimal rotation is identity and
        // the residual is the centered ramp k·(x − x̄).
        let n = 1001;
        let (len, k) = (2.0, 0.01);
        let mut gt = Vec::new();
        let mut est = Vec::new();
        for i in 0..n {
            let u = i as f64 / (n - 1) as f64;
            let x = len * (u - 0.5);
            let y = 0.05 * (2.0 * x / len).powi(2);
            gt.push(PoseSample::new(u, Pose::from_translation(Vec3::new(x, y, 0.0))));
            est.push(PoseSample::new(
                u,
                Pose::from_translation(Vec3::new(x * (1.0 + k), y, 0.0)),
            ));
        }
        let gt = Trajectory::new(gt).unwrap();
        let est = Trajectory::new(est).unwrap();
        let s = ape(&est, &gt).unwrap();
        // mean |k x| over a symmetric uniform grid
        let closed: f64 = (0..n)
            .map(|i| (k * len * (i as f64 / (n - 1) as f64 - 0.5)).abs())
            .sum::<f64>()
            / n as f64;
        assert!(
            (s.stats().mean - closed).abs() < 1e-6,
            "{} vs {}",
            s.stats().mean,
            closed
        );
        assert!((closed - k * len / 4.0).abs() < 1e-5);
    }

    #[test]
    fn ape_collinear_is_degenerate() {
        let gt = straight(100.0, 2.0, 1.0);
        assert!(matches!(
            ape(&gt, &gt),
            Err(MetricsError::Geometry(GeometryError::Degenerate(_)))
        ));
    }

    #[test]
    fn rpe_partition_count_and_zero() {
        let gt = straight(100.0, 1.0, 1.0);
        let s = rpe(&gt, &gt, 0.1).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!(s.stats().max, 0.0);
        assert!(matches!(rpe(&gt, &gt, 1.5), Err(MetricsError::TooShort { .. })));
    }

    #[test]
    fn rpe_linear_drift() {
        let gt = straight(100.0, 5.0, 1.0);
        for d in [0.01, 0.05, 0.1] {
            let est = gt.map_poses(|p| {
                let x = p.translation.x;
                Pose::from_translation(Vec3::new(x, d * x, 0.0))
            });
            let s = rpe(&est, &gt, 0.1).unwrap();
            for p in s.points() {
                assert!((p.error - 0.1 * d).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rpe_ignores_independent_frames() {
        let gt = crate::synth::generate(
            &crate::synth::MotionSpec::new(crate::synth::MotionPattern::Patrol, 75.0).with_duration(10.0),
        )
        .unwrap();
        let est = gt.map_poses(|p| Pose::new(p.rotation, p.translation * 1.02));
        let base = rpe(&est, &gt, 0.1).unwrap();
        let a = Pose::new(
            UnitQuat::from_xyzw(0.1, 0.2, 0.3, 0.9).unwrap(),
            Vec3::new(1.0, 2.0, 3.0),
        );
        let b = Pose::new(
            UnitQuat::from_xyzw(-0.4, 0.1, 0.0, 0.8).unwrap(),
            Vec3::new(-5.0, 0.0, 1.0),
        );
        let moved = rpe(&est.transformed(&a), &gt.transformed(&b), 0.1).unwrap();
        assert_eq!(base.len(), moved.len());
        for (p, q) in base.points().iter().zip(moved.points()) {
            assert!((p.error - q.error).abs() < 1e-9);
        }
    }

    #[test]
    fn stats_sanity() {
        let s = ErrorStats::from_errors(&[1.0, 2.0, 3.0, 10.0]);
        assert_eq!(s.mean, 4.0);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.max, 10.0);
        assert!(s.rmse >= s.mean && s.mean <= s.max);
    }

    #[test]
    fn series_csv_round_trip() {
        let gt = straight(100.0, 1.0, 1.0);
        let est = gt.map_poses(|p| Pose::from_translation(p.translation * 1.1));
        let s = rpe(&est, &gt, 0.1).unwrap();
        let back = ErrorSeries::from_csv(ErrorKind::Rpe, &s.to_csv(), Some(0.1)).unwrap();
        assert_eq!(back.to_csv(), s.to_csv());
        assert_eq!(back.stats(), s.stats());
        let v: serde_json::Value = serde_json::from_str(&s.stats_json()).unwrap();
        assert_eq!(v["kind"], "rpe");
        assert_eq!(v["segment_length"], 0.1);
    }

    #[test]
    fn r_squared_cases() {
        let a: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 * 0.01).collect();
        assert!((r_squared(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let b: Vec<f64> = a.iter().map(|x| 2.0 * x + 0.01).collect();
        assert!((r_squared(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!(r_squared_identity(&a, &b).unwrap() < 1.0);
        assert!(matches!(
            r_squared(&a[..2], &b[..2]),
            Err(MetricsError::InsufficientData(_))
        ));
        assert!(r_squared(&[1.0; 5], &a[..5]).is_err());
    }
}
