pub mod calibration;
pub mod features;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod report;
pub mod stats;
pub mod synth;
pub mod timesync;
