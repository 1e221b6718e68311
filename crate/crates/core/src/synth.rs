//! Deterministic motion and sensor simulator.
//!
//! Generates the four metronome-paced head-motion patterns as ground-truth
//! trajectories, derives matching IMU streams by finite differences, and
//! degrades trajectories into simulated device estimates with known error
//! structure.
//!
//! Body frame convention: X right, Y up, Z backward (front = −Z). World frame
//! is Y-up with the motion centered at the origin.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Pose, PoseSample, Trajectory, UnitQuat, Vec3};
use crate::io::ImuSample;

pub const GRAVITY: f64 = 9.81;
pub const DEFAULT_IMU_RATE_HZ: f64 = 200.0;

/// Heading diffusion of the drift direction, rad per sqrt(meter of travel).
const DRIFT_HEADING_DIFFUSION: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid motion spec: {0}")]
    BadSpec(String),
    #[error("invalid degradation model: {0}")]
    BadModel(String),
    #[error("trajectory too short: need {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionPattern {
    Shift,
    Patrol,
    Inspect,
    Rotate,
}

impl MotionPattern {
    pub fn default_beats_per_cycle(self) -> u32 {
        match self {
            MotionPattern::Shift | MotionPattern::Rotate => 4,
            MotionPattern::Patrol | MotionPattern::Inspect => 6,
        }
    }

    /// Shift: ±meters. Rotate: total yaw sweep, radians. Inspect: arc radius,
    /// meters. Patrol: line length, meters.
    pub fn default_amplitude(self) -> f64 {
        match self {
            MotionPattern::Shift => 0.5,
            MotionPattern::Rotate => PI,
            MotionPattern::Inspect => 1.0,
            MotionPattern::Patrol => 2.0,
        }
    }
}

impl std::str::FromStr for MotionPattern {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "shift" => Ok(MotionPattern::Shift),
            "patrol" => Ok(MotionPattern::Patrol),
            "inspect" => Ok(MotionPattern::Inspect),
            "rotate" => Ok(MotionPattern::Rotate),
            other => Err(SynthError::BadSpec(format!("unknown pattern {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MotionSpec {
    pub pattern: MotionPattern,
    pub bpm: f64,
    pub beats_per_cycle: u32,
    pub amplitude: f64,
    pub duration: f64,
    pub gt_rate: f64,
    pub est_rate: f64,
}

/// JSON form of [`MotionSpec`]; omitted fields take the pattern defaults.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MotionSpecDoc {
    pattern: MotionPattern,
    bpm: f64,
    beats_per_cycle: Option<u32>,
    amplitude: Option<f64>,
    duration: Option<f64>,
    gt_rate: Option<f64>,
    est_rate: Option<f64>,
}

impl<'de> Deserialize<'de> for MotionSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = MotionSpecDoc::deserialize(d)?;
        let mut spec = MotionSpec::new(doc.pattern, doc.bpm);
        if let Some(b) = doc.beats_per_cycle {
            spec.beats_per_cycle = b;
        }
        if let Some(a) = doc.amplitude {
            spec.amplitude = a;
        }
        if let Some(v) = doc.duration {
            spec.duration = v;
        }
        if let Some(v) = doc.gt_rate {
            spec.gt_rate = v;
        }
        if let Some(v) = doc.est_rate {
            spec.est_rate = v;
        }
        Ok(spec)
    }
}

impl MotionSpec {
    /// Pattern defaults: 60 s at 100 Hz ground truth, 90 Hz estimate.
    pub fn new(pattern: MotionPattern, bpm: f64) -> Self {
        MotionSpec {
            pattern,
            bpm,
            beats_per_cycle: pattern.default_beats_per_cycle(),
            amplitude: pattern.default_amplitude(),
            duration: 60.0,
            gt_rate: 100.0,
            est_rate: 90.0,
        }
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    /// Seconds per pattern cycle: one beat per quarter note.
    pub fn cycle_period(&self) -> f64 {
        self.beats_per_cycle as f64 * 60.0 / self.bpm
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::BadSpec(m));
        if !(self.bpm > 0.0 && self.bpm.is_finite()) {
            return bad(format!("bpm must be positive, got {}", self.bpm));
        }
        if self.beats_per_cycle == 0 {
            return bad("beats_per_cycle must be positive".into());
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return bad(format!("amplitude must be positive, got {}", self.amplitude));
        }
        for (name, r) in [("gt_rate", self.gt_rate), ("est_rate", self.est_rate)] {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("{name} must be positive, got {r}"));
            }
        }
        if !(self.duration.is_finite() && self.duration >= self.cycle_period()) {
            return bad(format!(
                "duration {} s shorter than one cycle ({} s)",
                self.duration,
                self.cycle_period()
            ));
        }
        Ok(())
    }

    /// Pose of the head at time `t`.
    pub fn pose_at(&self, t: f64) -> Pose {
        let period = self.cycle_period();
        let a = self.amplitude;
        match self.pattern {
            MotionPattern::Shift => {
                let x = a * (2.0 * PI * t / period).sin();
                Pose::from_translation(Vec3::new(x, 0.0, 0.0))
            }
            MotionPattern::Rotate => Pose::from_rotation(UnitQuat::from_yaw(0.5 * a * (2.0 * PI * t / period).sin())),
            MotionPattern::Inspect => {
                // back-and-forth along a semicircle, gaze on the center
                let phi = FRAC_PI_2 * (1.0 - (PI * t / period).cos());
                let p = Vec3::new(a * phi.cos(), 0.0, a * phi.sin());
                Pose::new(UnitQuat::from_yaw(FRAC_PI_2 - phi), p)
            }
            MotionPattern::Patrol => {
                let x = -0.5 * a * (PI * t / period).cos();
                let yaw = -FRAC_PI_2 + PI * patrol_turns(t / period);
                Pose::new(UnitQuat::from_yaw(yaw), Vec3::new(x, 0.0, 0.0))
            }
        }
    }
}

/// Smoothed count of completed U-turns at normalized time `s = t / traverse`.
/// Each turn is centered on an integer `k >= 1` and spans ±0.25 traverse with a
/// raised-cosine heading profile.
fn patrol_turns(s: f64) -> f64 {
    const HALF_WIDTH: f64 = 0.25;
    let k = s.round();
    let completed = (k - 1.0).max(0.0);
    if k < 1.0 {
        return 0.0;
    }
    let u = ((s - k + HALF_WIDTH) / (2.0 * HALF_WIDTH)).clamp(0.0, 1.0);
    completed + 0.5 * (1.0 - (PI * u).cos())
}

/// Ground-truth trajectory sampled at `gt_rate`: `round(duration·rate)` samples
/// at `k / rate`.
pub fn generate(spec: &MotionSpec) -> Result<Trajectory, SynthError> {
    spec.validate()?;
    let n = (spec.duration * spec.gt_rate).round() as usize;
    let samples = (0..n)
        .map(|k| {
            let t = k as f64 / spec.gt_rate;
            PoseSample::new(t, spec.pose_at(t))
        })
        .collect();
    Ok(Trajectory::with_frames(samples, "mocap_world", "rigid_body")?)
}

/// Adds gentle pitch and roll oscillation to every pose (head nodding and
/// tilting), giving multi-axis rotational excitation for calibration runs.
pub fn with_head_sway(traj: &Trajectory, pitch_amp: f64, roll_amp: f64, period: f64) -> Trajectory {
    traj.map_poses_timed(|t, p| {
        let pitch = UnitQuat::from_axis_angle(&Vec3::x(), pitch_amp * (2.0 * PI * t / period).sin());
        let roll = UnitQuat::from_axis_angle(&Vec3::z(), roll_amp * (2.0 * PI * t / (1.618 * period)).sin());
        Pose::new(p.rotation * pitch * roll, p.translation)
    })
}

/// Synthesizes an IMU stream from a trajectory.
///
/// Acceleration is the non-uniform central second difference of translation
/// at each interior sample, rotated into the body frame, minus world gravity
/// `(0, −g, 0)` when enabled (specific force). Angular rate is
/// `log(q_{k−1}⁻¹ q_{k+1}) / Δt`. Both are linearly resampled at `rate` over
/// the interior span.
pub fn derive_imu(traj: &Trajectory, rate: f64, gravity_on: bool) -> Result<Vec<ImuSample>, SynthError> {
    let s = traj.samples();
    if s.len() < 3 {
        return Err(SynthError::TooShort {
            needed: 3,
            got: s.len(),
        });
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(SynthError::BadSpec(format!("imu rate must be positive, got {rate}")));
    }
    let gravity = if gravity_on {
        Vec3::new(0.0, -GRAVITY, 0.0)
    } else {
        Vec3::zeros()
    };

    let knots: Vec<ImuSample> = s
        .windows(3)
        .map(|w| {
            let (a, b, c) = (&w[0], &w[1], &w[2]);
            let h1 = b.timestamp - a.timestamp;
            let h2 = c.timestamp - b.timestamp;
            let pa = a.pose.translation;
            let pb = b.pose.translation;
            let pc = c.pose.translation;
            let acc_world = 2.0 * (h1 * pc - (h1 + h2) * pb + h2 * pa) / (h1 * h2 * (h1 + h2));
            let acc = b.pose.rotation.inverse().rotate(&(acc_world - gravity));
            let gyro = (a.pose.rotation.inverse() * c.pose.rotation).log() / (h1 + h2);
            ImuSample {
                timestamp: b.timestamp,
                acc,
                gyro,
            }
        })
        .collect();

    let t0 = knots[0].timestamp;
    let t1 = knots[knots.len() - 1].timestamp;
    let n = ((t1 - t0) * rate + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for i in 0..n {
        let t = t0 + i as f64 / rate;
        while j + 2 < knots.len() && knots[j + 1].timestamp <= t {
            j += 1;
        }
        let (k0, k1) = if knots.len() == 1 {
            (&knots[0], &knots[0])
        } else {
            (&knots[j], &knots[j + 1])
        };
        let span = k1.timestamp - k0.timestamp;
        let u = if span > 0.0 {
            ((t - k0.timestamp) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(ImuSample {
            timestamp: t,
            acc: k0.acc + (k1.acc - k0.acc) * u,
            gyro: k0.gyro + (k1.gyro - k0.gyro) * u,
        });
    }
    Ok(out)
}

/// Error model turning ground truth into a simulated device estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationModel {
    /// White translation noise per axis, meters.
    pub trans_noise_std: f64,
    /// White rotation noise per axis (rotation vector), radians.
    pub rot_noise_std: f64,
    /// Drift magnitude added per meter of ground-truth travel.
    pub drift_rate: f64,
    /// Reported pose at `t` is the true pose at `t − latency`, seconds.
    pub latency: f64,
    /// Device clock minus reference clock, seconds.
    pub clock_offset: f64,
    pub rng_seed: u64,
}

impl DegradationModel {
    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, v) in [
            ("trans_noise_std", self.trans_noise_std),
            ("rot_noise_std", self.rot_noise_std),
            ("drift_rate", self.drift_rate),
            ("latency", self.latency),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SynthError::BadModel(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !self.clock_offset.is_finite() {
            return Err(SynthError::BadModel("clock_offset must be finite".into()));
        }
        Ok(())
    }
}

fn gaussian3(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}

/// Simulated device estimate at `est_rate`.
///
/// Drift accumulates as `drift_rate · Δs` along a slowly wandering random
/// direction, where `Δs` is ground-truth arc length, so each meter travelled
/// adds close to `drift_rate` meters of error. Deterministic for a given seed.
pub fn degrade(traj: &Trajectory, model: &DegradationModel, est_rate: f64) -> Result<Trajectory, SynthError> {
    model.validate()?;
    if !(est_rate > 0.0 && est_rate.is_finite()) {
        return Err(SynthError::BadModel(format!(
            "est_rate must be positive, got {est_rate}"
        )));
    }
    let (start, end) = traj.span().ok_or(SynthError::TooShort { needed: 1, got: 0 })?;
    let mut rng = ChaCha8Rng::seed_from_u64(model.rng_seed);

    let mut heading = gaussian3(&mut rng);
    if heading.norm() < 1e-9 {
        heading = Vec3::x();
    }
    heading.normalize_mut();

    let mut drift = Vec3::zeros();
    let mut prev_source: Option<f64> = None;
    let mut out = Vec::new();
    let mut j = 0usize;
    loop {
        // source time is when the reported pose was true
        let source = start + j as f64 / est_rate;
        if source + model.latency > end + 1e-12 || source > end {
            break;
        }
        let truth = traj.interpolate_at(source)?;
        if let Some(p) = prev_source {
            let ds = traj.arc_length(p, source)?;
            drift += heading * (model.drift_rate * ds);
            let wander = gaussian3(&mut rng) * (DRIFT_HEADING_DIFFUSION * ds.sqrt());
            heading = (heading + wander).normalize();
        }
        let tn = gaussian3(&mut rng);
        let rn = gaussian3(&mut rng);

        let mut pose = truth;
        if model.drift_rate > 0.0 {
            pose.translation += drift;
        }
        if model.trans_noise_std > 0.0 {
            pose.translation += tn * model.trans_noise_std;
        }
        if model.rot_noise_std > 0.0 {
            pose.rotation = pose.rotation * UnitQuat::exp(&(rn * model.rot_noise_std));
        }
        let reported = source + model.latency + model.clock_offset;
        out.push(PoseSample::new(reported, pose));
        prev_source = Some(source);
        j += 1;
    }
    Ok(Trajectory::with_frames(out, "device_world", "device")?)
}
