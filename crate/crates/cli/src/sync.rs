use std::net::{SocketAddr, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::AtomicBool;
use std::time::Duration;

use clap::{Args, Subcommand, ValueEnum};

use xrbench::geometry::Trajectory;
use xrbench::io::{format_imu, format_trajectory, parse_imu, parse_trajectory, read_text};
use xrbench::timesync::{
    apply_offset, run_sync_session_with, ClientConfig, ClockOffsetEstimate, EstimatorKind, ServerConfig, SyncServer,
    DEFAULT_SESSION_SECONDS, DEFAULT_STREAM_RATE_HZ,
};

use crate::error::{CliError, CliResult};
use crate::{write_file, OUT_ENV};

pub const DEFAULT_PORT: u16 = 9750;

#[derive(Debug, Subcommand)]
pub enum SyncCommand {
    /// Serve reference timestamps until stopped.
    Serve(ServeArgs),
    /// Run one session against a server and write the offset record.
    Client(ClientArgs),
    /// Shift a pose or IMU CSV onto the reference clock.
    Apply(ApplyArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "0.0.0.0:9750")]
    pub bind: String,
    /// Added to the server clock, seconds (for testing).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub clock_offset: f64,
    /// Stop after this many seconds.
    #[arg(long)]
    pub exit_after: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ClientArgs {
    /// Server as host:port (port defaults to 9750).
    #[arg(long)]
    pub server: String,
    #[arg(long, default_value_t = DEFAULT_SESSION_SECONDS)]
    pub duration: f64,
    #[arg(long, default_value_t = DEFAULT_STREAM_RATE_HZ)]
    pub rate: u32,
    #[arg(long, default_value_t = 20)]
    pub probes: usize,
    /// Fixed one-way delay in seconds instead of probing.
    #[arg(long)]
    pub one_way_delay: Option<f64>,
    #[arg(long, default_value = "mean")]
    pub estimator: EstimatorKind,
    /// Give up if the stream has not started within this many milliseconds.
    #[arg(long, default_value_t = 2000)]
    pub connect_timeout_ms: u64,
    /// Offset record path; defaults to `offset.csv` in the output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, env = OUT_ENV, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableKind {
    Pose,
    Imu,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[arg(long)]
    pub offset: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = TableKind::Pose)]
    pub kind: TableKind,
}

pub fn run(cmd: &SyncCommand) -> CliResult<()> {
    match cmd {
        SyncCommand::Serve(a) => serve(a),
        SyncCommand::Client(a) => client(a),
        SyncCommand::Apply(a) => apply(a),
    }
}

fn resolve(addr: &str) -> CliResult<SocketAddr> {
    let with_port = if addr.rsplit_once(':').is_some_and(|(_, p)| p.parse::<u16>().is_ok()) {
        addr.to_string()
    } else {
        format!("{addr}:{DEFAULT_PORT}")
    };
    with_port
        .to_socket_addrs()
        .map_err(|e| CliError::runtime(format!("cannot resolve {addr}: {e}")))?
        .next()
        .ok_or_else(|| CliError::runtime(format!("no address for {addr}")))
}

fn serve(a: &ServeArgs) -> CliResult<()> {
    let addr = resolve(&a.bind)?;
    let server = SyncServer::bind(
        addr,
        ServerConfig {
            clock_offset: a.clock_offset,
            ..ServerConfig::default()
        },
    )?;
    println!("serving on {}", server.local_addr()?);
    match a.exit_after {
        Some(secs) => {
            if !(secs >= 0.0) {
                return Err(CliError::usage("--exit-after must be non-negative"));
            }
            let handle = server.spawn()?;
            std::thread::sleep(Duration::from_secs_f64(secs));
            handle.stop()?;
        }
        None => server.run(&AtomicBool::new(false))?,
    }
    Ok(())
}

fn client(a: &ClientArgs) -> CliResult<()> {
    if !(a.duration > 0.0) || a.rate == 0 {
        return Err(CliError::usage("duration and rate must be positive"));
    }
    let server = resolve(&a.server)?;
    let cfg = ClientConfig {
        duration: a.duration,
        rate: a.rate,
        connect_timeout: Duration::from_millis(a.connect_timeout_ms),
        rtt_probes: a.probes.max(1),
        one_way_delay: a.one_way_delay,
        estimator: a.estimator,
        ..ClientConfig::default()
    };
    let est = run_sync_session_with(server, &cfg)?;
    let path = a.output.clone().unwrap_or_else(|| a.out.join("offset.csv"));
    est.save(&path)?;
    println!("{est}");
    println!("wrote {}", path.display());
    Ok(())
}

fn apply(a: &ApplyArgs) -> CliResult<()> {
    let offset = ClockOffsetEstimate::load(&a.offset)?;
    let text = read_text(&a.input)?;
    let out = match a.kind {
        TableKind::Pose => {
            let t: Trajectory =
                parse_trajectory(&text, None).map_err(|e| CliError::from(e).context(a.input.display()))?;
            format_trajectory(&apply_offset(&t, &offset))
        }
        TableKind::Imu => {
            let mut imu = parse_imu(&text, None).map_err(|e| CliError::from(e).context(a.input.display()))?;
            if offset.delta != 0.0 {
                imu.iter_mut().for_each(|s| s.timestamp -= offset.delta);
            }
            format_imu(&imu)
        }
    };
    write_file(&a.output, &out)
}
