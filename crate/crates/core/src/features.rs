//! Frame and IMU features, windowing against pose error, Pearson correlation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::io::{read_gray_image, FrameFeatures, GrayImage, ImuSample, IoError};
use crate::metrics::ErrorSeries;

pub const DEFAULT_FAST_THRESHOLD: u8 = 20;
const FAST_ARC: usize = 9;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("image {width}x{height} is smaller than {min}x{min}")]
    TooSmall { width: usize, height: usize, min: usize },
    #[error("bad axis map: {0}")]
    BadAxisMap(String),
    #[error("feature timestamps do not overlap the error windows")]
    NoOverlap,
    #[error("constant input")]
    ConstantInput,
    #[error("need at least 3 points, got {0}")]
    TooFew(usize),
    #[error("column length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageMetrics {
    pub brightness: f64,
    pub contrast: f64,
    pub entropy: f64,
    pub laplacian_var: f64,
}

fn check_size(img: &GrayImage, min: usize) -> Result<(), FeatureError> {
    if img.width() < min || img.height() < min {
        return Err(FeatureError::TooSmall {
            width: img.width(),
            height: img.height(),
            min,
        });
    }
    Ok(())
}

/// Mean, population std, histogram entropy (bits) and variance of the
/// 4-neighbor Laplacian over interior pixels.
pub fn image_metrics(img: &GrayImage) -> Result<ImageMetrics, FeatureError> {
    check_size(img, 3)?;
    let mut hist = [0u64; 256];
    for &p in img.pixels() {
        hist[p as usize] += 1;
    }
    let n = img.pixels().len() as f64;
    // integer sums keep the constant-image case exact
    let sum: u64 = hist.iter().enumerate().map(|(v, &c)| v as u64 * c).sum();
    let brightness = sum as f64 / n;
    let var = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| c as f64 * (v as f64 - brightness).powi(2))
        .sum::<f64>()
        / n;
    let entropy = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0);

    let (w, h) = (img.width(), img.height());
    let mut lap = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let c = img.get(x, y) as i32;
            let s = img.get(x - 1, y) as i32
                + img.get(x + 1, y) as i32
                + img.get(x, y - 1) as i32
                + img.get(x, y + 1) as i32;
            lap.push(s - 4 * c);
        }
    }
    let m = lap.len() as f64;
    let lap_sum: i64 = lap.iter().map(|&v| v as i64).sum();
    let lap_mean = lap_sum as f64 / m;
    let laplacian_var = lap.iter().map(|&v| (v as f64 - lap_mean).powi(2)).sum::<f64>() / m;

    Ok(ImageMetrics {
        brightness,
        contrast: var.sqrt(),
        entropy,
        laplacian_var,
    })
}

/// Radius-3 Bresenham circle, clockwise from 12 o'clock.
pub const FAST_CIRCLE: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Corner {
    pub x: usize,
    pub y: usize,
    pub score: u32,
}

/// Segment-test score at (x, y): the largest Σ|p − c| over a contiguous run of
/// at least nine circle pixels that are all brighter than c + t or all darker
/// than c − t. `None` if no such run exists. Caller keeps (x, y) ≥ 3 from edges.
fn segment_score(img: &GrayImage, x: usize, y: usize, t: u8) -> Option<u32> {
    let c = img.get(x, y) as i32;
    let t = t as i32;
    let ring: [i32; 16] = std::array::from_fn(|i| {
        img.get(
            (x as i32 + FAST_CIRCLE[i].0) as usize,
            (y as i32 + FAST_CIRCLE[i].1) as usize,
        ) as i32
    });
    let mut best: Option<u32> = None;
    for sign in [1, -1] {
        let hit = |v: i32| sign * (v - c) > t;
        // a full ring is one run; otherwise start scanning just after a miss
        let Some(miss) = (0..16).find(|&i| !hit(ring[i])) else {
            let s: i32 = ring.iter().map(|v| (v - c).abs()).sum();
            best = best.max(Some(s as u32));
            continue;
        };
        let (mut len, mut sum) = (0usize, 0i32);
        for k in 1..=16 {
            let v = ring[(miss + k) % 16];
            if hit(v) {
                len += 1;
                sum += (v - c).abs();
            } else {
                if len >= FAST_ARC {
                    best = best.max(Some(sum as u32));
                }
                len = 0;
                sum = 0;
            }
        }
    }
    best
}

/// FAST-9 detector. With `nonmax`, a corner survives unless a 3×3 neighbor
/// has a strictly larger score, so equal-score plateaus are kept whole.
pub fn fast_corners(img: &GrayImage, threshold: u8, nonmax: bool) -> Result<Vec<Corner>, FeatureError> {
    check_size(img, 7)?;
    let (w, h) = (img.width(), img.height());
    let mut scores = vec![0u32; w * h];
    let mut raw = Vec::new();
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            if let Some(s) = segment_score(img, x, y, threshold) {
                // scores are ≥ 9·(t+1) > 0, so 0 marks "not a corner"
                scores[y * w + x] = s;
                raw.push(Corner { x, y, score: s });
            }
        }
    }
    if !nonmax {
        return Ok(raw);
    }
    Ok(raw
        .into_iter()
        .filter(|c| (c.y - 1..=c.y + 1).all(|ny| (c.x - 1..=c.x + 1).all(|nx| scores[ny * w + nx] <= c.score)))
        .collect())
}

pub fn fast_corner_count(img: &GrayImage) -> Result<u64, FeatureError> {
    Ok(fast_corners(img, DEFAULT_FAST_THRESHOLD, true)?.len() as u64)
}

pub fn frame_features(timestamp: f64, img: &GrayImage, keypoints: Option<u64>) -> Result<FrameFeatures, FeatureError> {
    let m = image_metrics(img)?;
    let keypoints = match keypoints {
        Some(k) => k,
        None => fast_corner_count(img)?,
    };
    Ok(FrameFeatures {
        timestamp,
        brightness: m.brightness,
        contrast: m.contrast,
        entropy: m.entropy,
        laplacian_var: m.laplacian_var,
        keypoints,
    })
}

/// Reads and measures frames on `threads` workers; output order follows input.
pub fn extract_frame_features(frames: &[(f64, PathBuf)], threads: usize) -> Result<Vec<FrameFeatures>, FeatureError> {
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    let chunk = frames.len().div_ceil(threads.max(1));
    let parts: Vec<Result<Vec<FrameFeatures>, FeatureError>> = std::thread::scope(|s| {
        let handles: Vec<_> = frames
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|(t, p)| frame_features(*t, &read_gray_image(p)?, None))
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("feature worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(frames.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// One signed sensor axis (0 = x, 1 = y, 2 = z).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignedAxis {
    pub axis: usize,
    pub negate: bool,
}

impl SignedAxis {
    fn pick(&self, v: &Vec3) -> f64 {
        if self.negate {
            -v[self.axis]
        } else {
            v[self.axis]
        }
    }
}

impl std::str::FromStr for SignedAxis {
    type Err = FeatureError;
    fn from_str(s: &str) -> Result<Self, FeatureError> {
        let s = s.trim();
        let (negate, name) = match s.as_bytes().first() {
            Some(b'-') => (true, &s[1..]),
            Some(b'+') => (false, &s[1..]),
            _ => (false, s),
        };
        let axis = match name {
            "x" | "X" => 0,
            "y" | "Y" => 1,
            "z" | "Z" => 2,
            _ => return Err(FeatureError::BadAxisMap(format!("unknown axis {s:?}"))),
        };
        Ok(SignedAxis { axis, negate })
    }
}

/// Sensor axes to body (right, up, front). Must be a signed permutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisMap {
    pub right: SignedAxis,
    pub up: SignedAxis,
    pub front: SignedAxis,
}

impl Default for AxisMap {
    /// X right, Y up, Z back.
    fn default() -> Self {
        AxisMap {
            right: SignedAxis { axis: 0, negate: false },
            up: SignedAxis { axis: 1, negate: false },
            front: SignedAxis { axis: 2, negate: true },
        }
    }
}

impl AxisMap {
    pub fn new(right: SignedAxis, up: SignedAxis, front: SignedAxis) -> Result<Self, FeatureError> {
        let m = AxisMap { right, up, front };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let mut seen = [false; 3];
        for a in [self.right, self.up, self.front] {
            if a.axis > 2 || std::mem::replace(&mut seen[a.axis], true) {
                return Err(FeatureError::BadAxisMap("axes must be a permutation of x, y, z".into()));
            }
        }
        Ok(())
    }

    /// (right, up, front) components of a sensor vector.
    pub fn map(&self, v: &Vec3) -> [f64; 3] {
        [self.right.pick(v), self.up.pick(v), self.front.pick(v)]
    }
}

impl std::str::FromStr for AxisMap {
    type Err = FeatureError;
    /// `"+x,+y,-z"` lists the sensor axes feeding right, up and front.
    fn from_str(s: &str) -> Result<Self, FeatureError> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 3 {
            return Err(FeatureError::BadAxisMap(format!(
                "expected 3 comma-separated axes, got {s:?}"
            )));
        }
        AxisMap::new(parts[0].parse()?, parts[1].parse()?, parts[2].parse()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuFeatures {
    pub timestamp: f64,
    pub acc_right: f64,
    pub acc_up: f64,
    pub acc_front: f64,
    pub angvel_pitch: f64,
    pub angvel_yaw: f64,
    pub angvel_roll: f64,
}

/// Component magnitudes in body axes. With `gravity = Some(g)` the static
/// specific force `g` along up is subtracted before taking magnitudes.
pub fn imu_features(
    samples: &[ImuSample],
    axis_map: &AxisMap,
    gravity: Option<f64>,
) -> Result<Vec<ImuFeatures>, FeatureError> {
    axis_map.validate()?;
    let g = gravity.unwrap_or(0.0);
    Ok(samples
        .iter()
        .map(|s| {
            let [ar, au, af] = axis_map.map(&s.acc);
            let [wr, wu, wf] = axis_map.map(&s.gyro);
            ImuFeatures {
                timestamp: s.timestamp,
                acc_right: ar.abs(),
                acc_up: (au - g).abs(),
                acc_front: af.abs(),
                angvel_pitch: wr.abs(),
                angvel_yaw: wu.abs(),
                angvel_roll: wf.abs(),
            }
        })
        .collect())
}

pub const FRAME_FEATURE_NAMES: [&str; 5] = ["brightness", "contrast", "entropy", "laplacian_var", "keypoints"];
pub const IMU_FEATURE_NAMES: [&str; 6] = [
    "acc_right",
    "acc_up",
    "acc_front",
    "angvel_pitch",
    "angvel_yaw",
    "angvel_roll",
];

/// Named numeric columns over a shared, non-decreasing timestamp column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    names: Vec<String>,
    timestamps: Vec<f64>,
    columns: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn new(names: Vec<String>, timestamps: Vec<f64>, columns: Vec<Vec<f64>>) -> Result<Self, FeatureError> {
        if names.len() != columns.len() {
            return Err(FeatureError::LengthMismatch(names.len(), columns.len()));
        }
        if let Some(c) = columns.iter().find(|c| c.len() != timestamps.len()) {
            return Err(FeatureError::LengthMismatch(timestamps.len(), c.len()));
        }
        if timestamps.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(FeatureError::Io(IoError::NonMonotonicTimestamps { line: 0 }));
        }
        Ok(FeatureTable {
            names,
            timestamps,
            columns,
        })
    }

    pub fn from_frames(rows: &[FrameFeatures]) -> Self {
        let cols = vec![
            rows.iter().map(|r| r.brightness).collect(),
            rows.iter().map(|r| r.contrast).collect(),
            rows.iter().map(|r| r.entropy).collect(),
            rows.iter().map(|r| r.laplacian_var).collect(),
            rows.iter().map(|r| r.keypoints as f64).collect(),
        ];
        FeatureTable {
            names: FRAME_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            timestamps: rows.iter().map(|r| r.timestamp).collect(),
            columns: cols,
        }
    }

    pub fn from_imu(rows: &[ImuFeatures]) -> Self {
        let cols = vec![
            rows.iter().map(|r| r.acc_right).collect(),
            rows.iter().map(|r| r.acc_up).collect(),
            rows.iter().map(|r| r.acc_front).collect(),
            rows.iter().map(|r| r.angvel_pitch).collect(),
            rows.iter().map(|r| r.angvel_yaw).collect(),
            rows.iter().map(|r| r.angvel_roll).collect(),
        ];
        FeatureTable {
            names: IMU_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            timestamps: rows.iter().map(|r| r.timestamp).collect(),
            columns: cols,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// Error windows paired with per-window feature means.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTable {
    pub names: Vec<String>,
    pub timestamps: Vec<f64>,
    pub errors: Vec<f64>,
    pub columns: Vec<Vec<f64>>,
    pub samples_per_window: Vec<usize>,
}

/// Averages every feature over each error window `[window_start, timestamp]`
/// (inclusive). Windows containing no feature sample are dropped.
pub fn aggregate_to_windows(table: &FeatureTable, series: &ErrorSeries) -> Result<WindowTable, FeatureError> {
    let ts = &table.timestamps;
    let mut out = WindowTable {
        names: table.names.clone(),
        timestamps: Vec::new(),
        errors: Vec::new(),
        columns: vec![Vec::new(); table.columns.len()],
        samples_per_window: Vec::new(),
    };
    for p in series.points() {
        let lo = ts.partition_point(|&t| t < p.window_start);
        let hi = ts.partition_point(|&t| t <= p.timestamp);
        if hi <= lo {
            continue;
        }
        let k = (hi - lo) as f64;
        out.timestamps.push(p.timestamp);
        out.errors.push(p.error);
        out.samples_per_window.push(hi - lo);
        for (dst, src) in out.columns.iter_mut().zip(&table.columns) {
            dst.push(src[lo..hi].iter().sum::<f64>() / k);
        }
    }
    if out.timestamps.is_empty() {
        return Err(FeatureError::NoOverlap);
    }
    Ok(out)
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, FeatureError> {
    if x.len() != y.len() {
        return Err(FeatureError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(FeatureError::TooFew(n));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    // relative test: summation residue on a constant column is not variance
    let tiny = |ss: f64, m: f64| ss <= (m.abs() * 1e-12).powi(2) * n as f64;
    if tiny(sxx, mx) || tiny(syy, my) {
        return Err(FeatureError::ConstantInput);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationStatus {
    Ok,
    ConstantInput,
    InsufficientData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub name: String,
    pub pearson_r: Option<f64>,
    pub n: usize,
    pub status: CorrelationStatus,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub entries: Vec<CorrelationEntry>,
}

impl CorrelationReport {
    pub fn get(&self, name: &str) -> Option<&CorrelationEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn r(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(|e| e.pearson_r)
    }
}

/// Concatenates window tables that share the same feature columns.
pub fn concat_windows(parts: &[WindowTable]) -> Result<WindowTable, FeatureError> {
    let first = parts.first().ok_or(FeatureError::NoOverlap)?;
    let mut out = WindowTable {
        names: first.names.clone(),
        timestamps: Vec::new(),
        errors: Vec::new(),
        columns: vec![Vec::new(); first.columns.len()],
        samples_per_window: Vec::new(),
    };
    for p in parts {
        if p.names != out.names {
            return Err(FeatureError::LengthMismatch(out.names.len(), p.names.len()));
        }
        out.timestamps.extend_from_slice(&p.timestamps);
        out.errors.extend_from_slice(&p.errors);
        out.samples_per_window.extend_from_slice(&p.samples_per_window);
        for (dst, src) in out.columns.iter_mut().zip(&p.columns) {
            dst.extend_from_slice(src);
        }
    }
    Ok(out)
}

/// One Pearson entry per feature column against the window errors.
pub fn correlate_windows(w: &WindowTable) -> Result<CorrelationReport, FeatureError> {
    let mut report = CorrelationReport::default();
    for (name, col) in w.names.iter().zip(&w.columns) {
        let (pearson_r, status) = match pearson(col, &w.errors) {
            Ok(r) => (Some(r), CorrelationStatus::Ok),
            Err(FeatureError::ConstantInput) => (None, CorrelationStatus::ConstantInput),
            Err(FeatureError::TooFew(_)) => (None, CorrelationStatus::InsufficientData),
            Err(e) => return Err(e),
        };
        report.entries.push(CorrelationEntry {
            name: name.clone(),
            pearson_r,
            n: col.len(),
            status,
        });
    }
    Ok(report)
}

/// Correlates every column of every table against the error, each table
/// windowed on its own timestamps.
pub fn correlation_report(tables: &[&FeatureTable], series: &ErrorSeries) -> Result<CorrelationReport, FeatureError> {
    let mut report = CorrelationReport::default();
    for table in tables {
        let w = aggregate_to_windows(table, series)?;
        report.entries.extend(correlate_windows(&w)?.entries);
    }
    Ok(report)
}
