//! Rigid-body math: unit quaternions, SE(3) poses, timestamped trajectories,
//! interpolation, arc length and closed-form rigid alignment.
//!
//! Quaternions are stored and exchanged in `(x, y, z, w)` order and kept in
//! the canonical hemisphere `w >= 0`. Rotation distances are geodesic angles
//! `2·acos(|<q1, q2>|)`, evaluated through `atan2` for precision near zero.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Quaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("timestamp {t} outside trajectory span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("timestamps not strictly increasing at sample {index}")]
    NonMonotonic { index: usize },
    #[error("non-finite value at sample {index}")]
    NonFinite { index: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("point sets differ in length ({reference} vs {estimate})")]
    LengthMismatch { reference: usize, estimate: usize },
    #[error("degenerate alignment: {0}")]
    Degenerate(String),
    #[error("invalid interval [{start}, {end}]")]
    BadInterval { start: f64, end: f64 },
}

/// Unit quaternion with canonical sign (`w >= 0`).
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuat {
    x: f64,
    y: f64,
    z: f64,
    w: f64,
}

impl fmt::Debug for UnitQuat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UnitQuat({}, {}, {}, {})", self.x, self.y, self.z, self.w)
    }
}

impl TryFrom<[f64; 4]> for UnitQuat {
    type Error = String;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        UnitQuat::from_xyzw(v[0], v[1], v[2], v[3]).ok_or_else(|| format!("not a valid rotation quaternion: {v:?}"))
    }
}

impl From<UnitQuat> for [f64; 4] {
    fn from(q: UnitQuat) -> Self {
        q.xyzw()
    }
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat {
        x: 0.0,
        y: 0.0,
        z: 0.0,
        w: 1.0,
    };

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    /// Normalizes and canonicalizes. Returns `None` for zero or non-finite input.
    pub fn from_xyzw(x: f64, y: f64, z: f64, w: f64) -> Option<Self> {
        let norm = (x * x + y * y + z * z + w * w).sqrt();
        if !norm.is_finite() || norm < f64::MIN_POSITIVE {
            return None;
        }
        Some(Self::canonical(x / norm, y / norm, z / norm, w / norm))
    }

    /// Canonicalizes a quaternion already known to have unit norm, without
    /// renormalizing. Keeps stored values bit-exact.
    pub(crate) fn from_unit_xyzw(x: f64, y: f64, z: f64, w: f64) -> Self {
        Self::canonical(x, y, z, w)
    }

    fn canonical(x: f64, y: f64, z: f64, w: f64) -> Self {
        if w < 0.0 {
            UnitQuat {
                x: -x,
                y: -y,
                z: -z,
                w: -w,
            }
        } else {
            UnitQuat { x, y, z, w }
        }
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::IDENTITY;
        }
        Self::exp(&(axis * (angle / n)))
    }

    /// Rotation about the +Y (up) axis.
    pub fn from_yaw(yaw: f64) -> Self {
        Self::from_axis_angle(&Vec3::y(), yaw)
    }

    /// Exponential map from a rotation vector (axis · angle).
    pub fn exp(rotvec: &Vec3) -> Self {
        let theta = rotvec.norm();
        let half = 0.5 * theta;
        let k = if theta < 1e-8 {
            0.5 - theta * theta / 48.0
        } else {
            half.sin() / theta
        };
        let v = rotvec * k;
        Self::from_xyzw(v.x, v.y, v.z, half.cos()).unwrap_or(Self::IDENTITY)
    }

    /// Logarithm map to a rotation vector with angle in `[0, π]`.
    pub fn log(&self) -> Vec3 {
        let v = Vec3::new(self.x, self.y, self.z);
        let n = v.norm();
        if n < 1e-12 {
            // w is ~1 here
            return v * (2.0 / self.w);
        }
        let theta = 2.0 * n.atan2(self.w);
        v * (theta / n)
    }

    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }
    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn xyzw(&self) -> [f64; 4] {
        [self.x, self.y, self.z, self.w]
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn dot(&self, other: &UnitQuat) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z + self.w * other.w
    }

    pub fn inverse(&self) -> Self {
        // conjugate, then re-canonicalize (w unchanged so no flip needed)
        UnitQuat {
            x: -self.x,
            y: -self.y,
            z: -self.z,
            w: self.w,
        }
    }

    fn to_nalgebra(self) -> nalgebra::UnitQuaternion<f64> {
        nalgebra::UnitQuaternion::new_unchecked(Quaternion::new(self.w, self.x, self.y, self.z))
    }

    fn from_nalgebra(q: &nalgebra::UnitQuaternion<f64>) -> Self {
        let c = q.coords; // (i, j, k, w)
        Self::from_xyzw(c[0], c[1], c[2], c[3]).unwrap_or(Self::IDENTITY)
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        let q = self.vector();
        let t = 2.0 * q.cross(v);
        v + self.w * t + q.cross(&t)
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        *self.to_nalgebra().to_rotation_matrix().matrix()
    }

    /// Projects an arbitrary 3×3 matrix onto the nearest rotation.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_eps(m, 1e-15, 200, nalgebra::Rotation3::identity());
        Self::from_nalgebra(&nalgebra::UnitQuaternion::from_rotation_matrix(&rot))
    }

    /// Geodesic rotation angle between two orientations, radians in `[0, π]`.
    pub fn angle_to(&self, other: &UnitQuat) -> f64 {
        let rel = self.inverse() * *other;
        2.0 * rel.vector().norm().atan2(rel.w.abs())
    }

    /// Rotation angle of this quaternion.
    pub fn angle(&self) -> f64 {
        2.0 * self.vector().norm().atan2(self.w.abs())
    }

    /// Shortest-arc spherical interpolation, `u` in `[0, 1]`.
    pub fn slerp(&self, other: &UnitQuat, u: f64) -> UnitQuat {
        let rel = self.inverse() * *other;
        *self * UnitQuat::exp(&(rel.log() * u))
    }

    /// Chordal L2 mean: the principal eigenvector of `Σ q qᵀ`.
    pub fn chordal_mean(quats: &[UnitQuat]) -> Option<UnitQuat> {
        if quats.is_empty() {
            return None;
        }
        let mut acc = nalgebra::Matrix4::<f64>::zeros();
        for q in quats {
            let v = nalgebra::Vector4::new(q.x, q.y, q.z, q.w);
            acc += v * v.transpose();
        }
        let eig = acc.symmetric_eigen();
        let (imax, _) =
            eig.eigenvalues.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |best, (i, &l)| if l > best.1 { (i, l) } else { best },
            );
        let v = eig.eigenvectors.column(imax);
        UnitQuat::from_xyzw(v[0], v[1], v[2], v[3])
    }
}

impl Mul for UnitQuat {
    type Output = UnitQuat;

    fn mul(self, b: UnitQuat) -> UnitQuat {
        let a = self;
        let w = a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z;
        let x = a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y;
        let y = a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x;
        let z = a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w;
        UnitQuat::from_xyzw(x, y, z, w).unwrap_or(UnitQuat::IDENTITY)
    }
}

/// Rigid transform: rotation followed by translation (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: UnitQuat,
    #[serde(with = "vec3_serde")]
    pub translation: Vec3,
}

mod vec3_serde {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq([v.x, v.y, v.z])
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vec3::new(a[0], a[1], a[2]))
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(rotation: UnitQuat, translation: Vec3) -> Self {
        Pose { rotation, translation }
    }

    pub fn identity() -> Self {
        Pose::new(UnitQuat::IDENTITY, Vec3::zeros())
    }

    pub fn from_translation(t: Vec3) -> Self {
        Pose::new(UnitQuat::IDENTITY, t)
    }

    pub fn from_rotation(r: UnitQuat) -> Self {
        Pose::new(r, Vec3::zeros())
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let r = self.rotation.inverse();
        Pose {
            rotation: r,
            translation: -r.rotate(&self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    /// Rotation angle plus translation norm of `self⁻¹ ∘ other`.
    pub fn distance(&self, other: &Pose) -> (f64, f64) {
        let d = self.inverse().compose(other);
        (d.rotation.angle(), d.translation.norm())
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample {
    pub timestamp: f64,
    pub pose: Pose,
}

impl PoseSample {
    pub fn new(timestamp: f64, pose: Pose) -> Self {
        PoseSample { timestamp, pose }
    }
}

/// Time-ordered poses of a body frame expressed in a world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<PoseSample>,
    world_frame: String,
    body_frame: String,
}

impl Trajectory {
    pub fn new(samples: Vec<PoseSample>) -> Result<Self, GeometryError> {
        Self::with_frames(samples, "world", "body")
    }

    pub fn with_frames(
        samples: Vec<PoseSample>,
        world_frame: impl Into<String>,
        body_frame: impl Into<String>,
    ) -> Result<Self, GeometryError> {
        for (i, s) in samples.iter().enumerate() {
            if !s.timestamp.is_finite() || !s.pose.translation.iter().all(|v| v.is_finite()) {
                return Err(GeometryError::NonFinite { index: i });
            }
            if i > 0 && s.timestamp <= samples[i - 1].timestamp {
                return Err(GeometryError::NonMonotonic { index: i });
            }
        }
        Ok(Trajectory {
            samples,
            world_frame: world_frame.into(),
            body_frame: body_frame.into(),
        })
    }

    pub fn samples(&self) -> &[PoseSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<PoseSample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn world_frame(&self) -> &str {
        &self.world_frame
    }

    pub fn body_frame(&self) -> &str {
        &self.body_frame
    }

    pub fn set_frames(&mut self, world: impl Into<String>, body: impl Into<String>) {
        self.world_frame = world.into();
        self.body_frame = body.into();
    }

    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.timestamp)
    }

    pub fn poses(&self) -> impl Iterator<Item = &Pose> + '_ {
        self.samples.iter().map(|s| &s.pose)
    }

    /// `(first, last)` timestamps, or `None` when empty.
    pub fn span(&self) -> Option<(f64, f64)> {
        Some((self.samples.first()?.timestamp, self.samples.last()?.timestamp))
    }

    pub fn contains_time(&self, t: f64) -> bool {
        matches!(self.span(), Some((a, b)) if t >= a && t <= b)
    }

    /// Pose at `t`: linear translation and slerped rotation between the
    /// bracketing samples, or the exact sample pose on a timestamp hit.
    pub fn interpolate_at(&self, t: f64) -> Result<Pose, GeometryError> {
        let (start, end) = self.span().ok_or(GeometryError::TooFewSamples { needed: 1, got: 0 })?;
        if !(t >= start && t <= end) {
            return Err(GeometryError::OutOfRange { t, start, end });
        }
        let hi = self.samples.partition_point(|s| s.timestamp <= t);
        let before = &self.samples[hi - 1];
        if before.timestamp == t || hi == self.samples.len() {
            return Ok(before.pose);
        }
        let after = &self.samples[hi];
        let u = (t - before.timestamp) / (after.timestamp - before.timestamp);
        Ok(interpolate_pose(&before.pose, &after.pose, u))
    }

    /// Cumulative path length knots `(t, s)` over `[t_a, t_b]`: both ends plus
    /// every sample timestamp strictly inside.
    pub fn cumulative_arc(&self, t_a: f64, t_b: f64) -> Result<Vec<(f64, f64)>, GeometryError> {
        if !(t_a <= t_b) {
            return Err(GeometryError::BadInterval { start: t_a, end: t_b });
        }
        let first = self.interpolate_at(t_a)?;
        self.interpolate_at(t_b)?;
        let lo = self.samples.partition_point(|s| s.timestamp <= t_a);
        let hi = self.samples.partition_point(|s| s.timestamp < t_b);
        let mut knots = Vec::with_capacity(hi.saturating_sub(lo) + 2);
        let mut prev = first.translation;
        let mut acc = 0.0;
        knots.push((t_a, 0.0));
        for s in &self.samples[lo..hi] {
            acc += (s.pose.translation - prev).norm();
            prev = s.pose.translation;
            knots.push((s.timestamp, acc));
        }
        if t_b > t_a {
            let last = self.interpolate_at(t_b)?;
            acc += (last.translation - prev).norm();
            knots.push((t_b, acc));
        }
        Ok(knots)
    }

    /// Path length of the interpolated translation over `[t_a, t_b]`.
    pub fn arc_length(&self, t_a: f64, t_b: f64) -> Result<f64, GeometryError> {
        if !(t_a < t_b) {
            return Err(GeometryError::BadInterval { start: t_a, end: t_b });
        }
        Ok(self.cumulative_arc(t_a, t_b)?.last().map_or(0.0, |k| k.1))
    }

    pub fn total_length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (w[1].pose.translation - w[0].pose.translation).norm())
            .sum()
    }

    /// Replaces each pose `p` with `f(p)`, keeping timestamps and frames.
    pub fn map_poses(&self, mut f: impl FnMut(&Pose) -> Pose) -> Trajectory {
        Trajectory {
            samples: self
                .samples
                .iter()
                .map(|s| PoseSample::new(s.timestamp, f(&s.pose)))
                .collect(),
            world_frame: self.world_frame.clone(),
            body_frame: self.body_frame.clone(),
        }
    }

    /// Like [`Trajectory::map_poses`] with the sample timestamp passed along.
    pub fn map_poses_timed(&self, mut f: impl FnMut(f64, &Pose) -> Pose) -> Trajectory {
        Trajectory {
            samples: self
                .samples
                .iter()
                .map(|s| PoseSample::new(s.timestamp, f(s.timestamp, &s.pose)))
                .collect(),
            world_frame: self.world_frame.clone(),
            body_frame: self.body_frame.clone(),
        }
    }

    /// Premultiplies every pose by `left` (re-expresses the world frame).
    pub fn transformed(&self, left: &Pose) -> Trajectory {
        self.map_poses(|p| left.compose(p))
    }

    /// Shifts every timestamp by `dt`.
    pub fn shifted(&self, dt: f64) -> Trajectory {
        Trajectory {
            samples: self
                .samples
                .iter()
                .map(|s| PoseSample::new(s.timestamp + dt, s.pose))
                .collect(),
            world_frame: self.world_frame.clone(),
            body_frame: self.body_frame.clone(),
        }
    }

    /// Samples the trajectory at each timestamp of `times` that falls inside its span.
    pub fn resample(&self, times: impl IntoIterator<Item = f64>) -> Result<Trajectory, GeometryError> {
        let mut out = Vec::new();
        for t in times {
            if self.contains_time(t) {
                out.push(PoseSample::new(t, self.interpolate_at(t)?));
            }
        }
        Trajectory::with_frames(out, self.world_frame.clone(), self.body_frame.clone())
    }
}

pub fn interpolate_pose(a: &Pose, b: &Pose, u: f64) -> Pose {
    Pose {
        rotation: a.rotation.slerp(&b.rotation, u),
        translation: a.translation + (b.translation - a.translation) * u,
    }
}

/// Least-squares rigid transform `A` minimizing `Σ ‖A·estimate_i − reference_i‖²`
/// (no scale), by SVD of the centered cross-covariance with a reflection guard.
pub fn umeyama_align_points(reference: &[Vec3], estimate: &[Vec3]) -> Result<Pose, GeometryError> {
    if reference.len() != estimate.len() {
        return Err(GeometryError::LengthMismatch {
            reference: reference.len(),
            estimate: estimate.len(),
        });
    }
    let n = reference.len();
    if n < 3 {
        return Err(GeometryError::TooFewSamples { needed: 3, got: n });
    }
    let inv_n = 1.0 / n as f64;
    let mu_ref = reference.iter().sum::<Vec3>() * inv_n;
    let mu_est = estimate.iter().sum::<Vec3>() * inv_n;

    let mut cov = Matrix3::<f64>::zeros();
    for (r, e) in reference.iter().zip(estimate) {
        cov += (r - mu_ref) * (e - mu_est).transpose();
    }
    cov *= inv_n;

    let svd = cov.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(GeometryError::Degenerate("SVD did not converge".into())),
    };
    let sv = svd.singular_values;
    let mut sorted = [sv[0], sv[1], sv[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    if !(sorted[0] > 0.0) || sorted[1] <= 1e-10 * sorted[0] {
        return Err(GeometryError::Degenerate(
            "cross-covariance rank < 2 (collinear or coincident points)".into(),
        ));
    }

    let mut s = Matrix3::<f64>::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        let imin = (0..3).min_by(|&a, &b| sv[a].total_cmp(&sv[b])).unwrap_or(2);
        s[(imin, imin)] = -1.0;
    }
    let rot = u * s * v_t;
    let rotation = UnitQuat::from_matrix(&rot);
    let translation = mu_ref - rotation.rotate(&mu_est);
    Ok(Pose::new(rotation, translation))
}

/// Rigid alignment of two sample-for-sample associated trajectories.
pub fn umeyama_align(reference: &Trajectory, estimate: &Trajectory) -> Result<Pose, GeometryError> {
    let r: Vec<Vec3> = reference.poses().map(|p| p.translation).collect();
    let e: Vec<Vec3> = estimate.poses().map(|p| p.translation).collect();
    umeyama_align_points(&r, &e)
}
