//! IMU log ingestion (EuRoC-MAV CSV layout), agent-state extraction, synthetic
//! trajectories and navigation CSV output.
//!
//! The IMU file layout is the EuRoC `imu0/data.csv` convention:
//!
//! ```text
//! #timestamp [ns],w_RS_S_x [rad s^-1],w_RS_S_y [rad s^-1],w_RS_S_z [rad s^-1],a_RS_S_x [m s^-2],a_RS_S_y [m s^-2],a_RS_S_z [m s^-2]
//! 1403636579758555392,-0.0991,0.1382,0.0250,8.1125,-0.2451,-3.3995
//! ```
//!
//! Lines starting with `#` and blank lines are skipped. Every data row has exactly
//! seven comma-separated fields: an integer nanosecond timestamp, three gyro
//! channels and three accelerometer channels.

use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::earth::normal_gravity;
use crate::error::{Error, Result};
use crate::ins::NavState;
use crate::Vec3;

pub const N_STATES: usize = 6;

/// Header written by [`write_imu_csv`]; matches the EuRoC column naming.
pub const IMU_CSV_HEADER: &str = "#timestamp [ns],w_RS_S_x [rad s^-1],w_RS_S_y [rad s^-1],\
w_RS_S_z [rad s^-1],a_RS_S_x [m s^-2],a_RS_S_y [m s^-2],a_RS_S_z [m s^-2]";

pub const NAV_CSV_COLUMNS: [&str; 10] = [
    "t_ns",
    "lat_deg",
    "lon_deg",
    "alt_m",
    "vn_mps",
    "ve_mps",
    "vd_mps",
    "roll_deg",
    "pitch_deg",
    "yaw_deg",
];

/// One timestamped IMU reading: body-axis angular rate (rad/s) and specific force (m/s²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t_ns: u64,
    pub gyro: Vec3,
    pub accel: Vec3,
}

impl ImuSample {
    pub fn is_finite(&self) -> bool {
        self.gyro.iter().chain(&self.accel).all(|v| v.is_finite())
    }
}

/// Agent observation: `[gyro_x, gyro_y, gyro_z, accel_x, accel_y, accel_z]`.
pub type AgentState = [f64; N_STATES];

/// A validated IMU sequence: at least two finite samples with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<ImuSample>,
}

impl Trajectory {
    pub fn new(samples: Vec<ImuSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::data(format!(
                "fewer than 2 samples ({} found)",
                samples.len()
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::data(format!("sample {i} has a non-finite channel")));
            }
        }
        for (i, w) in samples.windows(2).enumerate() {
            if w[1].t_ns <= w[0].t_ns {
                return Err(Error::data(format!(
                    "non-increasing timestamp at sample {} ({} after {})",
                    i + 1,
                    w[1].t_ns,
                    w[0].t_ns
                )));
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[ImuSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Consecutive sample intervals in seconds; `len() - 1` entries.
    pub fn dts(&self) -> Vec<f64> {
        self.samples
            .windows(2)
            .map(|w| (w[1].t_ns - w[0].t_ns) as f64 * 1e-9)
            .collect()
    }

    /// SHA-256 over the numeric content (timestamps and channel bit patterns), hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.samples {
            h.update(s.t_ns.to_le_bytes());
            for v in s.gyro.iter().chain(&s.accel) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn parse_field<T: FromStr>(field: &str, line_no: usize, what: &str) -> Result<T> {
    field.trim().parse().map_err(|_| {
        Error::data(format!(
            "line {line_no}: {what} {:?} is not a number",
            field.trim()
        ))
    })
}

/// Parse an EuRoC-format IMU CSV stream.
pub fn parse_imu_csv<R: BufRead>(source: R) -> Result<Trajectory> {
    let mut samples = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let row = line.trim();
        if row.is_empty() || row.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::data(format!(
                "line {line_no}: expected 7 columns, found {}",
                fields.len()
            )));
        }
        let t_ns: u64 = parse_field(fields[0], line_no, "timestamp")?;
        let mut ch = [0.0; 6];
        for (k, f) in fields[1..].iter().enumerate() {
            let v: f64 = parse_field(f, line_no, "channel")?;
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "line {line_no}: non-finite channel value"
                )));
            }
            ch[k] = v;
        }
        if let Some(prev) = samples.last().map(|s: &ImuSample| s.t_ns) {
            if t_ns <= prev {
                return Err(Error::data(format!(
                    "line {line_no}: non-increasing timestamp {t_ns} (previous {prev})"
                )));
            }
        }
        samples.push(ImuSample {
            t_ns,
            gyro: [ch[0], ch[1], ch[2]],
            accel: [ch[3], ch[4], ch[5]],
        });
    }
    Trajectory::new(samples)
}

pub fn parse_imu_str(text: &str) -> Result<Trajectory> {
    parse_imu_csv(text.as_bytes())
}

/// Write a trajectory back out in the EuRoC layout; values use shortest round-trip formatting.
pub fn write_imu_csv<W: Write>(traj: &Trajectory, mut sink: W) -> Result<()> {
    writeln!(sink, "{IMU_CSV_HEADER}")?;
    for s in traj.samples() {
        writeln!(
            sink,
            "{},{},{},{},{},{},{}",
            s.t_ns, s.gyro[0], s.gyro[1], s.gyro[2], s.accel[0], s.accel[1], s.accel[2]
        )?;
    }
    sink.flush()?;
    Ok(())
}

pub fn agent_state(sample: &ImuSample) -> AgentState {
    let [gx, gy, gz] = sample.gyro;
    let [ax, ay, az] = sample.accel;
    [gx, gy, gz, ax, ay, az]
}

/// One agent state per sample, in order.
pub fn to_agent_states(traj: &Trajectory) -> Vec<AgentState> {
    traj.samples().iter().map(agent_state).collect()
}

/// Synthetic motion profiles used as oracle data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Level and at rest: zero rates, specific force exactly cancels normal gravity.
    Stationary,
    /// Level coordinated right turn at [`TURN_SPEED`] m/s and [`TURN_RATE`] rad/s.
    ConstantTurn,
    /// Stationary plus white noise and a slowly wandering per-channel offset.
    RandomWalk,
}

impl Profile {
    pub const NAMES: [&'static str; 3] = ["stationary", "constant_turn", "random_walk"];

    /// NED velocity the profile assumes at t = 0 (with zero initial attitude).
    pub fn initial_velocity(self) -> Vec3 {
        match self {
            Profile::ConstantTurn => [TURN_SPEED, 0.0, 0.0],
            _ => [0.0; 3],
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stationary" => Ok(Profile::Stationary),
            "constant_turn" => Ok(Profile::ConstantTurn),
            "random_walk" => Ok(Profile::RandomWalk),
            other => Err(Error::usage(format!(
                "unknown profile {other:?}; expected one of {}",
                Profile::NAMES.join(", ")
            ))),
        }
    }
}

pub const TURN_SPEED: f64 = 10.0;
pub const TURN_RATE: f64 = 0.1;

// Noise and bias-instability figures of the EuRoC ADIS16448 sensor sheet; the
// white-noise densities are scaled to a per-sample sigma at 200 Hz.
const GYRO_NOISE: f64 = 1.6968e-4 * 14.142_135_623_730_951;
const ACCEL_NOISE: f64 = 2.0e-3 * 14.142_135_623_730_951;
const GYRO_WALK: f64 = 1.9393e-5;
const ACCEL_WALK: f64 = 3.0e-3;

/// Generate a synthetic trajectory of `round(duration_s · rate_hz)` samples starting at t = 0.
///
/// `lat` is in degrees, `alt` in metres. Only `RandomWalk` consumes the seed.
pub fn synth_trajectory(
    profile: Profile,
    duration_s: f64,
    rate_hz: f64,
    lat: f64,
    alt: f64,
    seed: u64,
) -> Result<Trajectory> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::usage(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    if !(rate_hz > 0.0 && rate_hz <= 1e9) {
        return Err(Error::usage(format!(
            "rate must be in (0, 1e9] Hz, got {rate_hz}"
        )));
    }
    if !(lat.abs() <= 90.0 && alt.is_finite()) {
        return Err(Error::usage(format!("invalid site lat={lat} alt={alt}")));
    }
    let n = (duration_s * rate_hz).round() as usize;
    if n < 2 {
        return Err(Error::usage(format!(
            "duration {duration_s} s at {rate_hz} Hz yields {n} samples; need at least 2"
        )));
    }
    let g = normal_gravity(lat.to_radians(), alt);
    let period_ns = 1e9 / rate_hz;
    let dt = 1.0 / rate_hz;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut walk = [0.0; 6];

    let samples = (0..n)
        .map(|k| {
            let t_ns = (k as f64 * period_ns).round() as u64;
            let (gyro, accel) = match profile {
                Profile::Stationary => ([0.0; 3], [0.0, 0.0, -g]),
                Profile::ConstantTurn => ([0.0, 0.0, TURN_RATE], [0.0, TURN_SPEED * TURN_RATE, -g]),
                Profile::RandomWalk => {
                    let mut ch = [0.0, 0.0, 0.0, 0.0, 0.0, -g];
                    for c in 0..6 {
                        let (white, drift) = if c < 3 {
                            (GYRO_NOISE, GYRO_WALK)
                        } else {
                            (ACCEL_NOISE, ACCEL_WALK)
                        };
                        walk[c] += drift * dt.sqrt() * unit.sample(&mut rng);
                        ch[c] += walk[c] + white * unit.sample(&mut rng);
                    }
                    ([ch[0], ch[1], ch[2]], [ch[3], ch[4], ch[5]])
                }
            };
            ImuSample { t_ns, gyro, accel }
        })
        .collect();
    Trajectory::new(samples)
}

/// Write navigation states as CSV: header plus one row per state, angles in degrees.
pub fn write_nav_csv<W: Write>(states: &[NavState], mut sink: W) -> Result<()> {
    if states.is_empty() {
        return Err(Error::usage("no navigation states to write"));
    }
    writeln!(sink, "{}", NAV_CSV_COLUMNS.join(","))?;
    for s in states {
        writeln!(
            sink,
            "{},{},{},{},{},{},{},{},{},{}",
            s.t_ns,
            s.lat.to_degrees(),
            s.lon.to_degrees(),
            s.alt,
            s.vel_ned[0],
            s.vel_ned[1],
            s.vel_ned[2],
            s.att.roll.to_degrees(),
            s.att.pitch.to_degrees(),
            s.att.yaw.to_degrees()
        )?;
    }
    sink.flush()?;
    Ok(())
}
