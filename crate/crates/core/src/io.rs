//! Readers and writers for the testbed file formats.
//!
//! All tables are comma separated, UTF-8, `.` decimal point, with one optional
//! header line (detected by a non-numeric first token). Readers reject rather
//! than repair malformed rows and report 1-based line numbers. Writers print
//! floats with Rust's shortest round-trip representation, so write-read-write
//! is byte-stable.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::{GeometryError, Pose, PoseSample, Trajectory, UnitQuat, Vec3};

pub const POSE_HEADER: &str = "timestamp,tx,ty,tz,qx,qy,qz,qw";
pub const IMU_HEADER: &str = "timestamp,ax,ay,az,gx,gy,gz";
pub const FRAME_INDEX_HEADER: &str = "timestamp,filename";
pub const FEATURE_HEADER: &str = "timestamp,brightness,contrast,entropy,laplacian_var,keypoints";

/// Accepted deviation of a stored quaternion norm from 1 before rejection.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-3;
/// Norm deviations below this are treated as already unit (no rewrite of the stored bits).
const RENORMALIZE_THRESHOLD: f64 = 1e-12;

pub const NOMINAL_IMU_RATE_HZ: f64 = 200.0;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: timestamps must increase")]
    NonMonotonicTimestamps { line: usize },
    #[error("line {line}: quaternion norm {norm} is not unit")]
    BadQuaternion { line: usize, norm: f64 },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image header: {0}")]
    CorruptHeader(String),
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("bad image dimensions {width}x{height} for {len} pixels")]
    BadDimensions { width: usize, height: usize, len: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| match source.kind() {
        std::io::ErrorKind::NotFound => IoError::MissingFile(path.to_path_buf()),
        _ => IoError::Io {
            path: path.to_path_buf(),
            source,
        },
    })
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let wrap = |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(wrap)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(wrap)?;
    fs::rename(&tmp, path).map_err(wrap)
}

/// Maps canonical column names to the names used in a foreign file's header.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ColumnMap(pub HashMap<String, String>);

impl ColumnMap {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    fn source_name<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.0.get(canonical).map(String::as_str).unwrap_or(canonical)
    }
}

/// One parsed data row with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub line: usize,
    pub values: Vec<f64>,
}

fn is_header(line: &str) -> bool {
    let first = line.split(',').next().unwrap_or("").trim();
    first.parse::<f64>().is_err()
}

fn parse_value(tok: &str, line: usize) -> Result<f64, IoError> {
    let v: f64 = tok.trim().parse().map_err(|_| IoError::Parse {
        line,
        msg: format!("not a number: {:?}", tok),
    })?;
    if !v.is_finite() {
        return Err(IoError::Parse {
            line,
            msg: format!("non-finite value: {:?}", tok),
        });
    }
    Ok(v)
}

/// Parses a numeric table with the given canonical columns.
///
/// Without a column map, rows must have exactly `columns.len()` fields in
/// canonical order. With a map, a header is required and columns are picked
/// by name, so extra or reordered columns in the source are tolerated.
pub fn parse_numeric_table(text: &str, columns: &[&str], map: Option<&ColumnMap>) -> Result<Vec<Row>, IoError> {
    let mut rows = Vec::new();
    let mut picks: Option<Vec<usize>> = None;
    let mut width = columns.len();
    let mut seen_first = false;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if !seen_first {
            seen_first = true;
            if is_header(line) {
                if let Some(map) = map {
                    let names: Vec<&str> = line.split(',').map(str::trim).collect();
                    let mut idx = Vec::with_capacity(columns.len());
                    for c in columns {
                        let want = map.source_name(c);
                        let pos = names.iter().position(|n| *n == want).ok_or_else(|| IoError::Parse {
                            line: line_no,
                            msg: format!("header lacks column {want:?} (for {c})"),
                        })?;
                        idx.push(pos);
                    }
                    width = names.len();
                    picks = Some(idx);
                }
                continue;
            } else if map.is_some_and(|m| !m.0.is_empty()) {
                return Err(IoError::Parse {
                    line: line_no,
                    msg: "column map given but file has no header".into(),
                });
            }
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(IoError::Parse {
                line: line_no,
                msg: format!("expected {} columns, found {}", width, fields.len()),
            });
        }
        let values = match &picks {
            Some(idx) => idx
                .iter()
                .map(|&j| parse_value(fields[j], line_no))
                .collect::<Result<Vec<_>, _>>()?,
            None => fields
                .iter()
                .map(|f| parse_value(f, line_no))
                .collect::<Result<Vec<_>, _>>()?,
        };
        rows.push(Row { line: line_no, values });
    }
    Ok(rows)
}

fn unit_quaternion(x: f64, y: f64, z: f64, w: f64, line: usize) -> Result<UnitQuat, IoError> {
    let norm = (x * x + y * y + z * z + w * w).sqrt();
    if (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
        return Err(IoError::BadQuaternion { line, norm });
    }
    if (norm - 1.0).abs() > RENORMALIZE_THRESHOLD {
        return Ok(UnitQuat::from_xyzw(x, y, z, w).expect("norm checked"));
    }
    Ok(UnitQuat::from_unit_xyzw(x, y, z, w))
}

const POSE_COLUMNS: [&str; 8] = ["timestamp", "tx", "ty", "tz", "qx", "qy", "qz", "qw"];
const IMU_COLUMNS: [&str; 7] = ["timestamp", "ax", "ay", "az", "gx", "gy", "gz"];

pub fn parse_trajectory(text: &str, map: Option<&ColumnMap>) -> Result<Trajectory, IoError> {
    let rows = parse_numeric_table(text, &POSE_COLUMNS, map)?;
    let mut samples = Vec::with_capacity(rows.len());
    let mut prev: Option<f64> = None;
    for Row { line, values: v } in rows {
        if prev.is_some_and(|p| v[0] <= p) {
            return Err(IoError::NonMonotonicTimestamps { line });
        }
        prev = Some(v[0]);
        let rotation = unit_quaternion(v[4], v[5], v[6], v[7], line)?;
        samples.push(PoseSample::new(v[0], Pose::new(rotation, Vec3::new(v[1], v[2], v[3]))));
    }
    Ok(Trajectory::new(samples)?)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, IoError> {
    parse_trajectory(&read_text(path)?, None)
}

pub fn read_trajectory_mapped(path: &Path, map: &ColumnMap) -> Result<Trajectory, IoError> {
    parse_trajectory(&read_text(path)?, Some(map))
}

pub fn format_trajectory(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(traj.len() * 96 + 40);
    out.push_str(POSE_HEADER);
    out.push('\n');
    for s in traj.samples() {
        let t = &s.pose.translation;
        let [qx, qy, qz, qw] = s.pose.rotation.xyzw();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.timestamp, t.x, t.y, t.z, qx, qy, qz, qw
        );
    }
    out
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), IoError> {
    write_atomic(path, format_trajectory(traj).as_bytes())
}

/// One inertial reading: specific force (m/s²) and angular rate (rad/s), body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub timestamp: f64,
    pub acc: Vec3,
    pub gyro: Vec3,
}

pub fn parse_imu(text: &str, map: Option<&ColumnMap>) -> Result<Vec<ImuSample>, IoError> {
    let rows = parse_numeric_table(text, &IMU_COLUMNS, map)?;
    let mut out = Vec::with_capacity(rows.len());
    let mut prev: Option<f64> = None;
    for Row { line, values: v } in rows {
        if prev.is_some_and(|p| v[0] < p) {
            return Err(IoError::NonMonotonicTimestamps { line });
        }
        prev = Some(v[0]);
        out.push(ImuSample {
            timestamp: v[0],
            acc: Vec3::new(v[1], v[2], v[3]),
            gyro: Vec3::new(v[4], v[5], v[6]),
        });
    }
    Ok(out)
}

pub fn read_imu(path: &Path) -> Result<Vec<ImuSample>, IoError> {
    let samples = parse_imu(&read_text(path)?, None)?;
    if let Some(check) = check_imu_rate(&samples, NOMINAL_IMU_RATE_HZ) {
        if !check.ok {
            log::warn!(
                "{}: median IMU interval {:.6} s deviates from nominal {:.6} s",
                path.display(),
                check.median_interval,
                check.nominal_interval
            );
        }
    }
    Ok(samples)
}

pub fn format_imu(samples: &[ImuSample]) -> String {
    let mut out = String::with_capacity(samples.len() * 96 + 32);
    out.push_str(IMU_HEADER);
    out.push('\n');
    for s in samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.timestamp, s.acc.x, s.acc.y, s.acc.z, s.gyro.x, s.gyro.y, s.gyro.z
        );
    }
    out
}

pub fn write_imu(path: &Path, samples: &[ImuSample]) -> Result<(), IoError> {
    write_atomic(path, format_imu(samples).as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCheck {
    pub median_interval: f64,
    pub nominal_interval: f64,
    pub ok: bool,
}

/// Compares the median sample interval with `1/nominal_hz` (±20%).
/// `None` when fewer than two samples.
pub fn check_imu_rate(samples: &[ImuSample], nominal_hz: f64) -> Option<RateCheck> {
    if samples.len() < 2 {
        return None;
    }
    let mut dts: Vec<f64> = samples.windows(2).map(|w| w[1].timestamp - w[0].timestamp).collect();
    dts.sort_by(f64::total_cmp);
    let median_interval = crate::stats::median_sorted(&dts);
    let nominal_interval = 1.0 / nominal_hz;
    Some(RateCheck {
        median_interval,
        nominal_interval,
        ok: ((median_interval - nominal_interval) / nominal_interval).abs() <= 0.2,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub timestamp: f64,
    pub filename: String,
}

pub fn parse_frame_index(text: &str) -> Result<Vec<FrameRecord>, IoError> {
    let mut out: Vec<FrameRecord> = Vec::new();
    let mut first = true;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        if std::mem::take(&mut first) && is_header(l) {
            continue;
        }
        let (ts, name) = l.split_once(',').ok_or_else(|| IoError::Parse {
            line,
            msg: "expected `timestamp,filename`".into(),
        })?;
        let timestamp = parse_value(ts, line)?;
        let filename = name.trim().to_string();
        if filename.is_empty() || filename.contains(',') {
            return Err(IoError::Parse {
                line,
                msg: format!("bad filename {:?}", name),
            });
        }
        if out.last().is_some_and(|p| timestamp < p.timestamp) {
            return Err(IoError::NonMonotonicTimestamps { line });
        }
        out.push(FrameRecord { timestamp, filename });
    }
    Ok(out)
}

pub fn read_frame_index(path: &Path) -> Result<Vec<FrameRecord>, IoError> {
    parse_frame_index(&read_text(path)?)
}

/// Resolves frame filenames against `base` and checks that each file exists.
pub fn resolve_frames(frames: &[FrameRecord], base: &Path) -> Result<Vec<(f64, PathBuf)>, IoError> {
    frames
        .iter()
        .map(|f| {
            let p = base.join(&f.filename);
            if p.is_file() {
                Ok((f.timestamp, p))
            } else {
                Err(IoError::MissingFile(p))
            }
        })
        .collect()
}

pub fn format_frame_index(frames: &[FrameRecord]) -> String {
    let mut out = String::from(FRAME_INDEX_HEADER);
    out.push('\n');
    for f in frames {
        let _ = writeln!(out, "{},{}", f.timestamp, f.filename);
    }
    out
}

/// Per-frame image statistics and keypoint count.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FrameFeatures {
    pub timestamp: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub entropy: f64,
    pub laplacian_var: f64,
    pub keypoints: u64,
}

pub fn parse_frame_features(text: &str) -> Result<Vec<FrameFeatures>, IoError> {
    let cols = [
        "timestamp",
        "brightness",
        "contrast",
        "entropy",
        "laplacian_var",
        "keypoints",
    ];
    let rows = parse_numeric_table(text, &cols, None)?;
    let mut out: Vec<FrameFeatures> = Vec::with_capacity(rows.len());
    for Row { line, values: v } in rows {
        if out.last().is_some_and(|p| v[0] < p.timestamp) {
            return Err(IoError::NonMonotonicTimestamps { line });
        }
        if v[5] < 0.0 || v[5].fract() != 0.0 {
            return Err(IoError::Parse {
                line,
                msg: format!("keypoints must be a non-negative integer, got {}", v[5]),
            });
        }
        out.push(FrameFeatures {
            timestamp: v[0],
            brightness: v[1],
            contrast: v[2],
            entropy: v[3],
            laplacian_var: v[4],
            keypoints: v[5] as u64,
        });
    }
    Ok(out)
}

pub fn read_frame_features(path: &Path) -> Result<Vec<FrameFeatures>, IoError> {
    parse_frame_features(&read_text(path)?)
}

pub fn format_frame_features(rows: &[FrameFeatures]) -> String {
    let mut out = String::from(FEATURE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.timestamp, r.brightness, r.contrast, r.entropy, r.laplacian_var, r.keypoints
        );
    }
    out
}

pub fn write_frame_features(path: &Path, rows: &[FrameFeatures]) -> Result<(), IoError> {
    write_atomic(path, format_frame_features(rows).as_bytes())
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, IoError> {
        if width == 0 || height == 0 || width.checked_mul(height) != Some(pixels.len()) {
            return Err(IoError::BadDimensions {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayImage { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn transpose(&self) -> GrayImage {
        GrayImage::from_fn(self.height, self.width, |x, y| self.get(y, x))
    }
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<(), IoError> {
    write_atomic(path, &encode_pgm(img))
}

/// Decodes binary PGM (`P5`, maxval 255), or PNG when built with the `png` feature.
pub fn decode_gray_image(bytes: &[u8]) -> Result<GrayImage, IoError> {
    if bytes.starts_with(b"P5") {
        return decode_pgm(bytes);
    }
    if bytes.starts_with(b"\x89PNG") {
        return decode_png(bytes);
    }
    let magic: String = bytes.iter().take(2).map(|&b| b as char).collect();
    Err(IoError::UnsupportedFormat(format!("magic {:?}", magic)))
}

pub fn read_gray_image(path: &Path) -> Result<GrayImage, IoError> {
    let bytes = fs::read(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_gray_image(&bytes)
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, IoError> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(IoError::CorruptHeader("expected a decimal number".into()));
        }
        let digits = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = digits
            .parse()
            .map_err(|_| IoError::CorruptHeader(format!("number out of range: {digits}")))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(IoError::CorruptHeader("missing separator before pixel data".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(IoError::UnsupportedFormat(format!("PGM maxval {maxval} (only 255)")));
    }
    if width == 0 || height == 0 {
        return Err(IoError::CorruptHeader(format!("dimensions {width}x{height}")));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| IoError::CorruptHeader("dimensions overflow".into()))?;
    let data = &bytes[pos..];
    if data.len() < n {
        return Err(IoError::CorruptHeader(format!(
            "pixel data truncated: {} of {} bytes",
            data.len(),
            n
        )));
    }
    GrayImage::new(width, height, data[..n].to_vec())
}

#[cfg(feature = "png")]
fn decode_png(bytes: &[u8]) -> Result<GrayImage, IoError> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(|e| IoError::CorruptHeader(e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(IoError::UnsupportedFormat(format!(
            "PNG {:?} {:?} (only 8-bit grayscale)",
            info.color_type, info.bit_depth
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(w * h)];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| IoError::CorruptHeader(e.to_string()))?;
    buf.truncate(frame.buffer_size());
    GrayImage::new(w, h, buf)
}

#[cfg(not(feature = "png"))]
fn decode_png(_bytes: &[u8]) -> Result<GrayImage, IoError> {
    Err(IoError::UnsupportedFormat("PNG (build with the `png` feature)".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_row_trajectory() {
        let t = parse_trajectory("0,0,0,0,0,0,0,1\n0.01,0.1,0,0,0,0,0,1\n", None).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.samples()[1].timestamp, 0.01);
        assert_eq!(t.samples()[1].pose.translation.x, 0.1);
    }

    #[test]
    fn header_is_optional() {
        let with = parse_trajectory(&format!("{POSE_HEADER}\n1,0,0,0,0,0,0,1\n"), None).unwrap();
        let without = parse_trajectory("1,0,0,0,0,0,0,1\n", None).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn bad_quaternion_rejected() {
        let err = parse_trajectory("ts,a,b,c,d,e,f,g\n0,0,0,0,0,0,0,0.2\n", None).unwrap_err();
        match err {
            IoError::BadQuaternion { line, norm } => {
                assert_eq!(line, 2);
                assert!((norm - 0.2).abs() < 1e-12);
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn slightly_off_quaternion_renormalized() {
        let t = parse_trajectory("0,0,0,0,0,0,0,1.0005\n", None).unwrap();
        assert_eq!(t.samples()[0].pose.rotation.w(), 1.0);
    }

    #[test]
    fn row_errors_carry_line_numbers() {
        let text = "0,0,0,0,0,0,0,1\n1,0,0,0,0,0,1\n";
        assert!(matches!(
            parse_trajectory(text, None),
            Err(IoError::Parse { line: 2, .. })
        ));
        let text = "0,0,0,0,0,0,0,1\n\n1,x,0,0,0,0,0,1\n";
        assert!(matches!(
            parse_trajectory(text, None),
            Err(IoError::Parse { line: 3, .. })
        ));
        let text = "1,0,0,0,0,0,0,1\n1,0,0,0,0,0,0,1\n";
        assert!(matches!(
            parse_trajectory(text, None),
            Err(IoError::NonMonotonicTimestamps { line: 2 })
        ));
        assert!(matches!(
            parse_trajectory("0,nan,0,0,0,0,0,1\n", None),
            Err(IoError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn column_map_reorders() {
        let text = "time,qw,qx,qy,qz,x,y,z,extra\n0.5,1,0,0,0,1,2,3,99\n";
        let map = ColumnMap(
            [("timestamp", "time"), ("tx", "x"), ("ty", "y"), ("tz", "z")]
                .into_iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        );
        let t = parse_trajectory(text, Some(&map)).unwrap();
        assert_eq!(t.samples()[0].pose.translation, Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(t.samples()[0].timestamp, 0.5);
    }

    #[test]
    fn imu_cases() {
        assert!(parse_imu(&format!("{IMU_HEADER}\n"), None).unwrap().is_empty());
        let text: String = (0..200)
            .map(|i| format!("{},0,9.81,0,0,0,0\n", i as f64 / 199.0))
            .collect();
        let s = parse_imu(&text, None).unwrap();
        assert!(check_imu_rate(&s, NOMINAL_IMU_RATE_HZ).unwrap().ok);
        let slow: Vec<ImuSample> = s.iter().step_by(2).copied().collect();
        assert!(!check_imu_rate(&slow, NOMINAL_IMU_RATE_HZ).unwrap().ok);
        let shuffled = "0.01,0,0,0,0,0,0\n0.0,0,0,0,0,0,0\n";
        assert!(matches!(
            parse_imu(shuffled, None),
            Err(IoError::NonMonotonicTimestamps { line: 2 })
        ));
    }

    #[test]
    fn frame_index_and_resolution() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.pgm"), b"x").unwrap();
        let idx = parse_frame_index("timestamp,filename\n0.0,a.pgm\n0.1,b.pgm\n").unwrap();
        assert_eq!(idx.len(), 2);
        assert_eq!(parse_frame_index(&format_frame_index(&idx)).unwrap(), idx);
        assert!(matches!(resolve_frames(&idx, dir.path()), Err(IoError::MissingFile(_))));
        assert!(resolve_frames(&idx[..1], dir.path()).is_ok());
    }

    #[test]
    fn pgm_examples() {
        let bytes = b"P5\n# comment\n2 2\n255\n\x00\x55\xaa\xff".to_vec();
        let img = decode_gray_image(&bytes).unwrap();
        assert_eq!(img.pixels(), &[0, 85, 170, 255]);
        assert_eq!((img.width(), img.height()), (2, 2));

        let deep = b"P5 2 2 65535\n\x00\x00\x00\x00\x00\x00\x00\x00".to_vec();
        assert!(matches!(decode_gray_image(&deep), Err(IoError::UnsupportedFormat(_))));
        assert!(matches!(
            decode_gray_image(b"P5\n2 x\n255\n"),
            Err(IoError::CorruptHeader(_))
        ));
        assert!(matches!(
            decode_gray_image(b"P5\n2 2\n255\n\x00"),
            Err(IoError::CorruptHeader(_))
        ));
        assert!(matches!(
            decode_gray_image(b"P2\n1 1\n255\n0"),
            Err(IoError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn feature_table_rejects_fractional_keypoints() {
        assert!(parse_frame_features("0,1,2,3,4,5.5\n").is_err());
        let rows = parse_frame_features("0,1,2,3,4,5\n").unwrap();
        assert_eq!(rows[0].keypoints, 5);
    }
}
