//! Clock-offset estimation against a reference timestamp stream.
//!
//! Wire protocol (UDP, all integers big-endian):
//! - `PING` + u64 nonce: echoed verbatim by the server for RTT probes.
//! - `SYNC` + u32 duration_ms + u32 rate_hz: starts a session; the server
//!   streams `rate_hz · duration_ms / 1000` datagrams from a per-session
//!   socket back to the sender.
//! - stream datagram: u64 microseconds since the Unix epoch on the server clock.

use std::fmt;
use std::net::{SocketAddr, UdpSocket};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Trajectory;
use crate::io::{read_text, write_atomic, IoError};
use crate::stats::{median, Running};

pub const DEFAULT_SESSION_SECONDS: f64 = 10.0;
pub const DEFAULT_STREAM_RATE_HZ: u32 = 100;
pub const OFFSET_HEADER: &str = "delta_s,jitter_std_s,n_samples";

const PING: &[u8; 4] = b"PING";
const SYNC: &[u8; 4] = b"SYNC";

#[derive(Debug, Error)]
pub enum TimesyncError {
    #[error("no sync samples")]
    Empty,
    #[error("no response: all {0} probes dropped")]
    NoResponse(usize),
    #[error("timed out waiting for {0}")]
    Timeout(SocketAddr),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("socket error: {0}")]
    Socket(#[from] std::io::Error),
    #[error(transparent)]
    File(#[from] IoError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncSample {
    pub server_send_time: f64,
    pub client_recv_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockOffsetEstimate {
    /// client clock − server clock, seconds.
    pub delta: f64,
    pub jitter_std: f64,
    pub n_samples: usize,
    pub assumed_one_way_delay: f64,
}

impl ClockOffsetEstimate {
    pub fn zero() -> Self {
        ClockOffsetEstimate {
            delta: 0.0,
            jitter_std: 0.0,
            n_samples: 1,
            assumed_one_way_delay: 0.0,
        }
    }

    pub fn to_record(&self) -> String {
        format!(
            "{OFFSET_HEADER}\n{},{},{}\n",
            self.delta, self.jitter_std, self.n_samples
        )
    }

    /// Accepts the three-field record with or without the header line.
    pub fn from_record(text: &str) -> Result<Self, IoError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (mut line, mut body) = lines.next().ok_or(IoError::CorruptHeader("empty offset file".into()))?;
        if body == OFFSET_HEADER {
            (line, body) = lines.next().ok_or(IoError::Parse {
                line: line + 1,
                msg: "missing offset record".into(),
            })?;
        }
        let fields: Vec<&str> = body.split(',').map(str::trim).collect();
        let bad = |msg: String| IoError::Parse { line, msg };
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 fields, got {}", fields.len())));
        }
        let delta: f64 = fields[0]
            .parse()
            .map_err(|_| bad(format!("bad delta {:?}", fields[0])))?;
        let jitter_std: f64 = fields[1]
            .parse()
            .map_err(|_| bad(format!("bad jitter {:?}", fields[1])))?;
        let n_samples: usize = fields[2]
            .parse()
            .map_err(|_| bad(format!("bad count {:?}", fields[2])))?;
        if !delta.is_finite() || !(jitter_std >= 0.0) || n_samples == 0 {
            return Err(bad("offset record out of range".into()));
        }
        Ok(ClockOffsetEstimate {
            delta,
            jitter_std,
            n_samples,
            assumed_one_way_delay: 0.0,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        write_atomic(path, self.to_record().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::from_record(&read_text(path)?)
    }
}

impl fmt::Display for ClockOffsetEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "delta {:.3} ms, jitter {:.3} ms, {} samples, owd {:.3} ms",
            self.delta * 1e3,
            self.jitter_std * 1e3,
            self.n_samples,
            self.assumed_one_way_delay * 1e3
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    #[default]
    Mean,
    Median,
}

impl std::str::FromStr for EstimatorKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(EstimatorKind::Mean),
            "median" => Ok(EstimatorKind::Median),
            other => Err(format!("unknown estimator {other:?}")),
        }
    }
}

pub fn estimate_offset(samples: &[SyncSample], one_way_delay: f64) -> Result<ClockOffsetEstimate, TimesyncError> {
    estimate_offset_with(samples, one_way_delay, EstimatorKind::Mean)
}

pub fn estimate_offset_with(
    samples: &[SyncSample],
    one_way_delay: f64,
    kind: EstimatorKind,
) -> Result<ClockOffsetEstimate, TimesyncError> {
    if samples.is_empty() {
        return Err(TimesyncError::Empty);
    }
    let offsets: Vec<f64> = samples
        .iter()
        .map(|s| s.client_recv_time - s.server_send_time - one_way_delay)
        .collect();
    let run: Running = offsets.iter().copied().collect();
    let delta = match kind {
        EstimatorKind::Mean => run.mean(),
        EstimatorKind::Median => median(&offsets),
    };
    Ok(ClockOffsetEstimate {
        delta,
        jitter_std: run.sample_std(),
        n_samples: samples.len(),
        assumed_one_way_delay: one_way_delay,
    })
}

/// Shifts timestamps by −delta so device time maps onto reference time.
pub fn apply_offset(traj: &Trajectory, estimate: &ClockOffsetEstimate) -> Trajectory {
    if estimate.delta == 0.0 {
        return traj.clone();
    }
    traj.shifted(-estimate.delta)
}

/// Something that can time a request/response exchange.
pub trait DelayChannel {
    /// Round-trip time in seconds, `None` if the probe was lost.
    fn round_trip(&mut self) -> Option<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelModel {
    pub base_delay: f64,
    pub jitter_std: f64,
    pub drop_probability: f64,
    pub rng_seed: u64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            base_delay: 0.0,
            jitter_std: 0.0,
            drop_probability: 0.0,
            rng_seed: 0,
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<(), TimesyncError> {
        if !(self.base_delay >= 0.0) || !self.base_delay.is_finite() {
            return Err(TimesyncError::InvalidParameter(format!(
                "base_delay {}",
                self.base_delay
            )));
        }
        if !(self.jitter_std >= 0.0) || !self.jitter_std.is_finite() {
            return Err(TimesyncError::InvalidParameter(format!(
                "jitter_std {}",
                self.jitter_std
            )));
        }
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(TimesyncError::InvalidParameter(format!(
                "drop_probability {}",
                self.drop_probability
            )));
        }
        Ok(())
    }
}

/// Seeded impairment channel. Each leg draws an independent delay
/// `max(0, base + N(0, jitter))` and is independently dropped.
#[derive(Debug, Clone)]
pub struct SimulatedChannel {
    model: ChannelModel,
    rng: ChaCha8Rng,
    jitter: Option<Normal<f64>>,
}

impl SimulatedChannel {
    pub fn new(model: ChannelModel) -> Result<Self, TimesyncError> {
        model.validate()?;
        let jitter = (model.jitter_std > 0.0).then(|| Normal::new(0.0, model.jitter_std).expect("validated"));
        Ok(SimulatedChannel {
            model,
            rng: ChaCha8Rng::seed_from_u64(model.rng_seed),
            jitter,
        })
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }

    pub fn one_way(&mut self) -> Option<f64> {
        if self.model.drop_probability > 0.0 && self.rng.random::<f64>() < self.model.drop_probability {
            return None;
        }
        let noise = self.jitter.map_or(0.0, |n| n.sample(&mut self.rng));
        Some((self.model.base_delay + noise).max(0.0))
    }
}

impl DelayChannel for SimulatedChannel {
    fn round_trip(&mut self) -> Option<f64> {
        let out = self.one_way();
        let back = self.one_way();
        Some(out? + back?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RttMeasurement {
    pub mean_rtt: f64,
    pub one_way_delay: f64,
    pub received: usize,
}

pub fn measure_rtt(channel: &mut dyn DelayChannel, n_probes: usize) -> Result<RttMeasurement, TimesyncError> {
    if n_probes == 0 {
        return Err(TimesyncError::InvalidParameter("n_probes must be at least 1".into()));
    }
    let run: Running = (0..n_probes).filter_map(|_| channel.round_trip()).collect();
    if run.count() == 0 {
        return Err(TimesyncError::NoResponse(n_probes));
    }
    Ok(RttMeasurement {
        mean_rtt: run.mean(),
        one_way_delay: run.mean() / 2.0,
        received: run.count(),
    })
}

/// Server stream sent at `start + k/rate` on the server clock and received on
/// a client clock that runs `true_offset` ahead; dropped messages are absent.
pub fn simulate_stream(channel: &mut SimulatedChannel, true_offset: f64, duration: f64, rate: f64) -> Vec<SyncSample> {
    let n = (duration * rate).round() as usize;
    (0..n)
        .filter_map(|k| {
            let send = k as f64 / rate;
            channel.one_way().map(|d| SyncSample {
                server_send_time: send,
                client_recv_time: send + d + true_offset,
            })
        })
        .collect()
}

/// Full session over a simulated channel: RTT probes, then the stream.
pub fn run_simulated_session(
    channel: &mut SimulatedChannel,
    true_offset: f64,
    duration: f64,
    rate: f64,
    rtt_probes: usize,
) -> Result<ClockOffsetEstimate, TimesyncError> {
    let rtt = measure_rtt(channel, rtt_probes)?;
    let samples = simulate_stream(channel, true_offset, duration, rate);
    if samples.is_empty() {
        return Err(TimesyncError::NoResponse((duration * rate).round() as usize));
    }
    estimate_offset(&samples, rtt.one_way_delay)
}

fn epoch_seconds(offset: f64) -> f64 {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
    now.as_secs_f64() + offset
}

pub fn encode_timestamp(seconds: f64) -> [u8; 8] {
    ((seconds * 1e6).round().max(0.0) as u64).to_be_bytes()
}

pub fn decode_timestamp(bytes: &[u8]) -> Option<f64> {
    let raw: [u8; 8] = bytes.try_into().ok()?;
    Some(u64::from_be_bytes(raw) as f64 * 1e-6)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerConfig {
    /// Added to the system clock before stamping; simulates a skewed reference.
    pub clock_offset: f64,
    /// Upper bound on a requested session, seconds.
    pub max_session: f64,
    pub max_rate: u32,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            clock_offset: 0.0,
            max_session: 600.0,
            max_rate: 10_000,
        }
    }
}

/// Reference timestamp server. Echoes probes on the main socket and runs each
/// stream session on its own thread and socket.
pub struct SyncServer {
    socket: UdpSocket,
    config: ServerConfig,
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<Result<(), TimesyncError>>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(mut self) -> Result<(), TimesyncError> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> Result<(), TimesyncError> {
        self.stop.store(true, Ordering::SeqCst);
        match self.thread.take() {
            Some(t) => t.join().unwrap_or(Ok(())),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

impl SyncServer {
    pub fn bind(addr: SocketAddr, config: ServerConfig) -> Result<Self, TimesyncError> {
        let socket = UdpSocket::bind(addr)?;
        socket.set_read_timeout(Some(Duration::from_millis(50)))?;
        Ok(SyncServer { socket, config })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, TimesyncError> {
        Ok(self.socket.local_addr()?)
    }

    /// Serves until `stop` is set.
    pub fn run(&self, stop: &AtomicBool) -> Result<(), TimesyncError> {
        let mut buf = [0u8; 64];
        let mut sessions: Vec<JoinHandle<()>> = Vec::new();
        while !stop.load(Ordering::SeqCst) {
            let (n, peer) = match self.socket.recv_from(&mut buf) {
                Ok(x) => x,
                Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                    sessions.retain(|h| !h.is_finished());
                    continue;
                }
                // ICMP errors from departed peers surface here on some platforms.
                Err(e) if e.kind() == std::io::ErrorKind::ConnectionReset => continue,
                Err(e) => return Err(e.into()),
            };
            let msg = &buf[..n];
            if n == 12 && &msg[..4] == PING {
                let _ = self.socket.send_to(msg, peer);
            } else if n == 12 && &msg[..4] == SYNC {
                let duration_ms = u32::from_be_bytes(msg[4..8].try_into().expect("4 bytes"));
                let rate = u32::from_be_bytes(msg[8..12].try_into().expect("4 bytes"));
                let duration = (duration_ms as f64 / 1e3).min(self.config.max_session);
                if rate == 0 || rate > self.config.max_rate {
                    log::warn!("rejecting session from {peer}: rate {rate}");
                    continue;
                }
                log::info!("session from {peer}: {duration} s at {rate} Hz");
                let local_ip = self.socket.local_addr()?.ip();
                let offset = self.config.clock_offset;
                sessions.push(std::thread::spawn(move || {
                    if let Err(e) = stream_session(local_ip, peer, duration, rate, offset) {
                        log::warn!("session {peer} failed: {e}");
                    }
                }));
            } else {
                log::debug!("ignoring {n}-byte datagram from {peer}");
            }
        }
        for h in sessions {
            let _ = h.join();
        }
        Ok(())
    }

    pub fn spawn(self) -> Result<ServerHandle, TimesyncError> {
        let addr = self.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let thread = std::thread::spawn(move || self.run(&flag));
        Ok(ServerHandle {
            addr,
            stop,
            thread: Some(thread),
        })
    }
}

fn stream_session(
    ip: std::net::IpAddr,
    peer: SocketAddr,
    duration: f64,
    rate: u32,
    clock_offset: f64,
) -> Result<(), TimesyncError> {
    let socket = UdpSocket::bind(SocketAddr::new(ip, 0))?;
    let n = (duration * rate as f64).round() as u64;
    let start = Instant::now();
    for k in 0..n {
        let due = start + Duration::from_secs_f64(k as f64 / rate as f64);
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            std::thread::sleep(wait);
        }
        socket.send_to(&encode_timestamp(epoch_seconds(clock_offset)), peer)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientConfig {
    pub duration: f64,
    pub rate: u32,
    /// Wait for the first stream datagram before giving up.
    pub connect_timeout: Duration,
    pub rtt_probes: usize,
    pub probe_timeout: Duration,
    /// Skip probing and use this one-way delay instead.
    pub one_way_delay: Option<f64>,
    pub estimator: EstimatorKind,
    /// Added to the local clock; lets tests emulate a skewed device.
    pub local_clock_offset: f64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            duration: DEFAULT_SESSION_SECONDS,
            rate: DEFAULT_STREAM_RATE_HZ,
            connect_timeout: Duration::from_secs(2),
            rtt_probes: 20,
            probe_timeout: Duration::from_millis(250),
            one_way_delay: None,
            estimator: EstimatorKind::Mean,
            local_clock_offset: 0.0,
        }
    }
}

/// RTT probes against a live server's echo port.
pub struct UdpProbeChannel {
    socket: UdpSocket,
    server: SocketAddr,
    nonce: u64,
}

impl UdpProbeChannel {
    pub fn new(server: SocketAddr, timeout: Duration) -> Result<Self, TimesyncError> {
        let socket = UdpSocket::bind(unspecified_for(server))?;
        socket.set_read_timeout(Some(timeout))?;
        Ok(UdpProbeChannel {
            socket,
            server,
            nonce: 0,
        })
    }
}

impl DelayChannel for UdpProbeChannel {
    fn round_trip(&mut self) -> Option<f64> {
        self.nonce += 1;
        let mut msg = [0u8; 12];
        msg[..4].copy_from_slice(PING);
        msg[4..].copy_from_slice(&self.nonce.to_be_bytes());
        let sent = Instant::now();
        self.socket.send_to(&msg, self.server).ok()?;
        let mut buf = [0u8; 64];
        loop {
            let (n, from) = self.socket.recv_from(&mut buf).ok()?;
            // late echoes of earlier probes are skipped
            if from == self.server && n == 12 && buf[..12] == msg {
                return Some(sent.elapsed().as_secs_f64());
            }
        }
    }
}

fn unspecified_for(addr: SocketAddr) -> SocketAddr {
    match addr {
        SocketAddr::V4(_) => "0.0.0.0:0".parse().expect("literal"),
        SocketAddr::V6(_) => "[::]:0".parse().expect("literal"),
    }
}

/// Collects the raw stream for one session.
pub fn receive_stream(server: SocketAddr, config: &ClientConfig) -> Result<Vec<SyncSample>, TimesyncError> {
    if !(config.duration > 0.0) || config.rate == 0 {
        return Err(TimesyncError::InvalidParameter(
            "duration and rate must be positive".into(),
        ));
    }
    let socket = UdpSocket::bind(unspecified_for(server))?;
    let mut msg = [0u8; 12];
    msg[..4].copy_from_slice(SYNC);
    msg[4..8].copy_from_slice(&((config.duration * 1e3).round() as u32).to_be_bytes());
    msg[8..].copy_from_slice(&config.rate.to_be_bytes());
    socket.send_to(&msg, server)?;

    let expected = (config.duration * config.rate as f64).round() as usize;
    let idle = Duration::from_secs_f64((20.0 / config.rate as f64).max(0.5));
    let deadline = Instant::now() + config.connect_timeout + Duration::from_secs_f64(config.duration + 1.0);
    let mut samples = Vec::with_capacity(expected);
    let mut buf = [0u8; 64];
    socket.set_read_timeout(Some(config.connect_timeout))?;
    while samples.len() < expected && Instant::now() < deadline {
        match socket.recv_from(&mut buf) {
            Ok((8, from)) if from.ip() == server.ip() => {
                let recv = epoch_seconds(config.local_clock_offset);
                if let Some(send) = decode_timestamp(&buf[..8]) {
                    samples.push(SyncSample {
                        server_send_time: send,
                        client_recv_time: recv,
                    });
                }
                socket.set_read_timeout(Some(idle))?;
            }
            Ok(_) => continue,
            Err(e)
                if matches!(
                    e.kind(),
                    std::io::ErrorKind::WouldBlock
                        | std::io::ErrorKind::TimedOut
                        | std::io::ErrorKind::ConnectionRefused
                        | std::io::ErrorKind::ConnectionReset
                ) =>
            {
                break
            }
            Err(e) => return Err(e.into()),
        }
    }
    if samples.is_empty() {
        return Err(TimesyncError::Timeout(server));
    }
    if samples.len() < expected {
        log::warn!("received {} of {} stream datagrams", samples.len(), expected);
    }
    Ok(samples)
}

/// Registers with the server, consumes its stream, then probes RTT.
pub fn run_sync_session(server: SocketAddr, duration: f64) -> Result<ClockOffsetEstimate, TimesyncError> {
    run_sync_session_with(
        server,
        &ClientConfig {
            duration,
            ..ClientConfig::default()
        },
    )
}

pub fn run_sync_session_with(server: SocketAddr, config: &ClientConfig) -> Result<ClockOffsetEstimate, TimesyncError> {
    let samples = receive_stream(server, config)?;
    let owd = match config.one_way_delay {
        Some(d) => d,
        None => {
            let mut probe = UdpProbeChannel::new(server, config.probe_timeout)?;
            measure_rtt(&mut probe, config.rtt_probes.max(1))?.one_way_delay
        }
    };
    estimate_offset_with(&samples, owd, config.estimator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose, PoseSample};

    #[test]
    fn rtt_symmetric_legs() {
        let mut ch = SimulatedChannel::new(ChannelModel {
            base_delay: 0.00521,
            ..Default::default()
        })
        .unwrap();
        let m = measure_rtt(&mut ch, 50).unwrap();
        assert_eq!(m.mean_rtt, 0.01042);
        assert_eq!(m.one_way_delay, 0.00521);
    }

    #[test]
    fn rtt_zero_and_monte_carlo() {
        let mut ch = SimulatedChannel::new(ChannelModel::default()).unwrap();
        let m = measure_rtt(&mut ch, 5).unwrap();
        assert_eq!((m.mean_rtt, m.one_way_delay), (0.0, 0.0));

        let mut ch = SimulatedChannel::new(ChannelModel {
            base_delay: 0.003,
            jitter_std: 0.001,
            rng_seed: 7,
            ..Default::default()
        })
        .unwrap();
        let m = measure_rtt(&mut ch, 10_000).unwrap();
        assert!((m.mean_rtt - 0.006).abs() < 1e-4, "{}", m.mean_rtt);
    }

    #[test]
    fn rtt_errors() {
        let mut ch = SimulatedChannel::new(ChannelModel {
            drop_probability: 1.0,
            ..Default::default()
        })
        .unwrap();
        assert!(matches!(measure_rtt(&mut ch, 10), Err(TimesyncError::NoResponse(10))));
        assert!(measure_rtt(&mut ch, 0).is_err());
        assert!(SimulatedChannel::new(ChannelModel {
            base_delay: -1.0,
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn estimate_small_cases() {
        assert!(matches!(estimate_offset(&[], 0.0), Err(TimesyncError::Empty)));
        let one = [SyncSample {
            server_send_time: 5.0,
            client_recv_time: 5.0,
        }];
        let e = estimate_offset(&one, 0.0).unwrap();
        assert_eq!((e.delta, e.jitter_std, e.n_samples), (0.0, 0.0, 1));

        let two = [
            SyncSample {
                server_send_time: 0.0,
                client_recv_time: 0.010,
            },
            SyncSample {
                server_send_time: 1.0,
                client_recv_time: 1.020,
            },
        ];
        let e = estimate_offset(&two, 0.0).unwrap();
        assert!((e.delta - 0.015).abs() < 1e-12);
        assert!((e.jitter_std - 0.00707107).abs() < 1e-7);
    }

    #[test]
    fn seeded_offset_recovery() {
        let mut ch = SimulatedChannel::new(ChannelModel {
            base_delay: 0.005,
            jitter_std: 0.002,
            rng_seed: 11,
            ..Default::default()
        })
        .unwrap();
        let samples = simulate_stream(&mut ch, 0.1234, 10.0, 100.0);
        assert_eq!(samples.len(), 1000);
        let e = estimate_offset(&samples, 0.005).unwrap();
        assert!((e.delta - 0.1234).abs() < 5e-4, "{}", e.delta);
        let m = estimate_offset_with(&samples, 0.005, EstimatorKind::Median).unwrap();
        assert!((m.delta - 0.1234).abs() < 5e-4);
    }

    #[test]
    fn zero_jitter_is_exact() {
        let mut ch = SimulatedChannel::new(ChannelModel {
            base_delay: 0.004,
            ..Default::default()
        })
        .unwrap();
        let samples = simulate_stream(&mut ch, 0.25, 1.0, 100.0);
        let e = estimate_offset(&samples, 0.004).unwrap();
        assert!((e.delta - 0.25).abs() < 1e-14);
    }

    #[test]
    fn lossy_session_still_estimates() {
        let mut ch = SimulatedChannel::new(ChannelModel {
            base_delay: 0.002,
            jitter_std: 0.0005,
            drop_probability: 0.3,
            rng_seed: 3,
        })
        .unwrap();
        let e = run_simulated_session(&mut ch, 0.05, 10.0, 100.0, 20).unwrap();
        assert!(e.n_samples >= 1 && e.n_samples < 1000);
        assert!((e.delta - 0.05).abs() < 1e-3);
    }

    #[test]
    fn apply_offset_cases() {
        let traj = Trajectory::new(vec![
            PoseSample::new(1.0, Pose::identity()),
            PoseSample::new(2.0, Pose::identity()),
        ])
        .unwrap();
        let zero = ClockOffsetEstimate::zero();
        assert_eq!(apply_offset(&traj, &zero), traj);
        let one = ClockOffsetEstimate { delta: 1.0, ..zero };
        let shifted = apply_offset(&traj, &one);
        assert_eq!(shifted.timestamps().collect::<Vec<_>>(), vec![0.0, 1.0]);
        let back = apply_offset(&shifted, &ClockOffsetEstimate { delta: -1.0, ..zero });
        assert_eq!(back, traj);
    }

    #[test]
    fn record_round_trip() {
        let e = ClockOffsetEstimate {
            delta: -0.012345678901,
            jitter_std: 0.0021,
            n_samples: 998,
            assumed_one_way_delay: 0.0,
        };
        assert_eq!(ClockOffsetEstimate::from_record(&e.to_record()).unwrap(), e);
        assert_eq!(ClockOffsetEstimate::from_record("0.5,0,3").unwrap().delta, 0.5);
        assert!(ClockOffsetEstimate::from_record("0.5,0").is_err());
        assert!(ClockOffsetEstimate::from_record("0.5,-1,3").is_err());
    }

    #[test]
    fn timestamp_codec() {
        let t = 1_700_000_000.123456;
        let back = decode_timestamp(&encode_timestamp(t)).unwrap();
        assert!((back - t).abs() < 1e-6);
        assert!(decode_timestamp(&[0; 7]).is_none());
    }

    #[test]
    fn loopback_session() {
        let server = SyncServer::bind("127.0.0.1:0".parse().unwrap(), ServerConfig::default())
            .unwrap()
            .spawn()
            .unwrap();
        let cfg = ClientConfig {
            duration: 0.5,
            ..Default::default()
        };
        let e = run_sync_session_with(server.local_addr(), &cfg).unwrap();
        assert!(e.delta.abs() < 1e-3, "{e}");
        assert!(e.n_samples > 25);
        server.stop().unwrap();
    }

    #[test]
    fn server_down_times_out() {
        let port = UdpSocket::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
        let cfg = ClientConfig {
            duration: 0.2,
            connect_timeout: Duration::from_millis(200),
            ..Default::default()
        };
        assert!(matches!(
            run_sync_session_with(port, &cfg),
            Err(TimesyncError::Timeout(_))
        ));
    }
}
