use std::path::PathBuf;

use clap::Args;

use xrbench::io::{read_text, write_imu, write_trajectory};
use xrbench::synth::{degrade, derive_imu, generate, DegradationModel, MotionPattern, MotionSpec, DEFAULT_IMU_RATE_HZ};
use xrbench::timesync::ClockOffsetEstimate;

use crate::error::{CliError, CliResult};
use crate::manifest::{DeviceEntry, RunEntry, RunManifest};
use crate::{file_stem, write_file, OUT_ENV};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Motion spec JSON; overrides the pattern flags.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value = "shift")]
    pub pattern: MotionPattern,
    #[arg(long, default_value_t = 50.0)]
    pub bpm: f64,
    #[arg(long)]
    pub beats_per_cycle: Option<u32>,
    /// Pattern amplitude (meters, or radians for rotate).
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long, default_value_t = 60.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 100.0)]
    pub gt_rate: f64,
    #[arg(long, default_value_t = 90.0)]
    pub est_rate: f64,
    #[arg(long, default_value_t = DEFAULT_IMU_RATE_HZ)]
    pub imu_rate: f64,
    /// Leave gravity out of the synthetic accelerometer.
    #[arg(long)]
    pub no_gravity: bool,

    /// Degradation model JSON; overrides the noise flags.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub trans_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub rot_noise: f64,
    /// Drift per meter traveled.
    #[arg(long, default_value_t = 0.0)]
    pub drift: f64,
    #[arg(long, default_value_t = 0.0)]
    pub latency: f64,
    /// Device clock minus reference clock, seconds.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub clock_offset: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value = "sim")]
    pub device: String,
    /// Run label; defaults to `<pattern>-<bpm>bpm`.
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long, env = OUT_ENV, default_value = ".")]
    pub out: PathBuf,
}

impl SimulateArgs {
    pub fn motion_spec(&self) -> CliResult<MotionSpec> {
        let spec = match &self.spec {
            Some(p) => {
                serde_json::from_str(&read_text(p)?).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
            }
            None => {
                let mut s = MotionSpec::new(self.pattern, self.bpm).with_duration(self.duration);
                if let Some(b) = self.beats_per_cycle {
                    s.beats_per_cycle = b;
                }
                if let Some(a) = self.amplitude {
                    s = s.with_amplitude(a);
                }
                s.gt_rate = self.gt_rate;
                s.est_rate = self.est_rate;
                s
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn model(&self) -> CliResult<DegradationModel> {
        let m = match &self.model {
            Some(p) => {
                serde_json::from_str(&read_text(p)?).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
            }
            None => DegradationModel {
                trans_noise_std: self.trans_noise,
                rot_noise_std: self.rot_noise,
                drift_rate: self.drift,
                latency: self.latency,
                clock_offset: self.clock_offset,
                rng_seed: self.seed,
            },
        };
        m.validate()?;
        Ok(m)
    }
}

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    let spec = args.motion_spec()?;
    let model = args.model()?;
    if !(args.imu_rate > 0.0) {
        return Err(CliError::usage("imu rate must be positive"));
    }
    let gt = generate(&spec)?;
    let est = degrade(&gt, &model, spec.est_rate)?;
    let mut imu = derive_imu(&gt, args.imu_rate, !args.no_gravity)?;
    // the IMU shares the device clock
    imu.iter_mut().for_each(|s| s.timestamp += model.clock_offset);

    let dev = file_stem(&args.device);
    let out = &args.out;
    write_trajectory(&out.join("gt.csv"), &gt)?;
    write_trajectory(&out.join(format!("{dev}.csv")), &est)?;
    write_imu(&out.join(format!("{dev}_imu.csv")), &imu)?;

    // the simulator knows its own clock offset exactly
    let offset = (model.clock_offset != 0.0).then(|| PathBuf::from(format!("{dev}_offset.csv")));
    if let Some(p) = &offset {
        ClockOffsetEstimate {
            delta: model.clock_offset,
            ..ClockOffsetEstimate::zero()
        }
        .save(&out.join(p))?;
    }

    let label = args
        .label
        .clone()
        .unwrap_or_else(|| format!("{}-{}bpm", format!("{:?}", spec.pattern).to_lowercase(), spec.bpm));
    let manifest = RunManifest {
        reference_device: Some(args.device.clone()),
        segment_length: xrbench::metrics::DEFAULT_SEGMENT_LENGTH,
        runs: vec![RunEntry {
            label,
            ground_truth: "gt.csv".into(),
            column_map: None,
            devices: vec![DeviceEntry {
                id: args.device.clone(),
                trajectory: format!("{dev}.csv").into(),
                column_map: None,
                offset,
                calibration: None,
                imu: Some(format!("{dev}_imu.csv").into()),
                frames: None,
                features: None,
            }],
        }],
        case_study: None,
        base: out.clone(),
    };
    let json = manifest.to_json();
    write_file(&out.join("manifest.json"), &format!("{json}\n"))?;
    println!("{json}");
    log::info!(
        "{} gt rows, {} estimate rows, {} imu rows",
        gt.len(),
        est.len(),
        imu.len()
    );
    Ok(())
}
