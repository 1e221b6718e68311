use std::fmt;

use xrbench::calibration::CalibrationError;
use xrbench::features::FeatureError;
use xrbench::io::IoError;
use xrbench::metrics::MetricsError;
use xrbench::report::ReportError;
use xrbench::synth::SynthError;
use xrbench::timesync::TimesyncError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// A failed command with the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or invalid input content (exit 2).
    Usage(String),
    /// IO, network or computation failure (exit 3).
    Runtime(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    /// Prefixes the message with where it happened.
    pub fn context(self, what: impl fmt::Display) -> Self {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{what}: {m}")),
            CliError::Runtime(m) => CliError::Runtime(format!("{what}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Parse { .. }
            | IoError::NonMonotonicTimestamps { .. }
            | IoError::BadQuaternion { .. }
            | IoError::CorruptHeader(_)
            | IoError::UnsupportedFormat(_)
            | IoError::BadDimensions { .. }
            | IoError::MissingFile(_)
            | IoError::Geometry(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::BadSpec(_) | SynthError::BadModel(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<TimesyncError> for CliError {
    fn from(e: TimesyncError) -> Self {
        match e {
            TimesyncError::InvalidParameter(_) => CliError::Usage(e.to_string()),
            TimesyncError::File(io) => io.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::Io(io) => io.into(),
            CalibrationError::Json(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Io(io) => io.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::BadAxisMap(_) => CliError::Usage(e.to_string()),
            FeatureError::Io(io) => io.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Io(io) => io.into(),
            ReportError::Parse { .. } | ReportError::UnknownReference(_) => CliError::Usage(e.to_string()),
            ReportError::ZeroReference(..) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}
