//! Strapdown mechanization in a north-pointing local-level (NED) frame.
//!
//! Conventions: body axes are forward-right-down, attitude is Z-Y-X Euler
//! (yaw, then pitch, then roll), and the accelerometer reports specific force,
//! so a level vehicle at rest reads `[0, 0, -g]`. Earth-rate and transport-rate
//! terms are not modelled. Integration is forward Euler at the sample interval:
//! attitude first, then velocity with the updated attitude, then position with
//! the updated velocity.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::earth::WGS84;
use crate::error::{Error, Result};
use crate::imu_io::{ImuSample, Trajectory};
use crate::Vec3;

pub type Mat3 = [[f64; 3]; 3];

/// Default distance from ±90° pitch at which Euler kinematics are refused.
pub const GIMBAL_MARGIN: f64 = 1e-6;
/// Distance from the poles at which the longitude rate is refused.
pub const POLAR_MARGIN: f64 = 1e-9;

pub const DEFAULT_LAT_DEG: f64 = 39.975_172;
pub const DEFAULT_LON_DEG: f64 = 116.344_695_283;
pub const DEFAULT_ALT_M: f64 = 30.0;

/// Roll, pitch, yaw in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Attitude {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Attitude {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavState {
    pub t_ns: u64,
    /// Geodetic latitude, rad.
    pub lat: f64,
    /// Longitude, rad, kept in (−π, π].
    pub lon: f64,
    /// Height above the ellipsoid, m.
    pub alt: f64,
    /// North, east, down velocity, m/s.
    pub vel_ned: Vec3,
    pub att: Attitude,
}

impl NavState {
    /// At rest and level at the default site (39.975172° N, 116.344695283° E, 30 m).
    pub fn default_at(t_ns: u64) -> Self {
        Self {
            t_ns,
            lat: DEFAULT_LAT_DEG.to_radians(),
            lon: DEFAULT_LON_DEG.to_radians(),
            alt: DEFAULT_ALT_M,
            vel_ned: [0.0; 3],
            att: Attitude::default(),
        }
    }

    fn is_finite(&self) -> bool {
        [
            self.lat,
            self.lon,
            self.alt,
            self.att.roll,
            self.att.pitch,
            self.att.yaw,
        ]
        .iter()
        .chain(&self.vel_ned)
        .all(|v| v.is_finite())
    }
}

/// Wrap an angle into (−π, π].
pub fn wrap_pi(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Body-to-NED rotation C_b^n = R_z(yaw) · R_y(pitch) · R_x(roll).
pub fn dcm_body_to_nav(att: &Attitude) -> Mat3 {
    let (sr, cr) = att.roll.sin_cos();
    let (sp, cp) = att.pitch.sin_cos();
    let (sy, cy) = att.yaw.sin_cos();
    [
        [cp * cy, sr * sp * cy - cr * sy, cr * sp * cy + sr * sy],
        [cp * sy, sr * sp * sy + cr * cy, cr * sp * sy - sr * cy],
        [-sp, sr * cp, cr * cp],
    ]
}

pub fn mat_vec(m: &Mat3, v: &Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Euler angle rates from body rates `[p, q, r]`, refusing pitch within `margin` of ±π/2.
// Negated comparison so a NaN pitch is rejected too.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn euler_rates_with_margin(att: &Attitude, gyro: &Vec3, margin: f64) -> Result<Vec3> {
    if !(att.pitch.abs() < FRAC_PI_2 - margin) {
        return Err(Error::numeric(format!(
            "gimbal singularity: pitch {} rad within {margin} rad of ±π/2",
            att.pitch
        )));
    }
    let [p, q, r] = *gyro;
    let (sr, cr) = att.roll.sin_cos();
    let (tp, cp) = (att.pitch.tan(), att.pitch.cos());
    let qr = q * sr + r * cr;
    Ok([p + qr * tp, q * cr - r * sr, qr / cp])
}

pub fn euler_rates(att: &Attitude, gyro: &Vec3) -> Result<Vec3> {
    euler_rates_with_margin(att, gyro, GIMBAL_MARGIN)
}

/// Advance one sample of `dt` seconds. The output carries the sample's timestamp.
pub fn ins_step(state: &NavState, sample: &ImuSample, dt: f64) -> Result<NavState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::usage(format!(
            "step interval must be positive, got {dt}"
        )));
    }
    if !state.is_finite() {
        return Err(Error::usage("navigation state has non-finite components"));
    }
    if state.lat.abs() > FRAC_PI_2 - POLAR_MARGIN {
        return Err(Error::numeric(format!(
            "polar singularity: latitude {} rad",
            state.lat
        )));
    }

    let rates = euler_rates(&state.att, &sample.gyro)?;
    let att = Attitude {
        roll: wrap_pi(state.att.roll + rates[0] * dt),
        pitch: state.att.pitch + rates[1] * dt,
        yaw: wrap_pi(state.att.yaw + rates[2] * dt),
    };

    let f_nav = mat_vec(&dcm_body_to_nav(&att), &sample.accel);
    let g = WGS84.normal_gravity(state.lat, state.alt);
    let v = state.vel_ned;
    let vel_ned = [
        v[0] + f_nav[0] * dt,
        v[1] + f_nav[1] * dt,
        v[2] + (f_nav[2] + g) * dt,
    ];

    let rm = WGS84.meridian_radius(state.lat);
    let rn = WGS84.prime_vertical_radius(state.lat);
    let lat = state.lat + vel_ned[0] / (rm + state.alt) * dt;
    let lon = wrap_pi(state.lon + vel_ned[1] / ((rn + state.alt) * state.lat.cos()) * dt);
    let alt = state.alt - vel_ned[2] * dt;

    Ok(NavState {
        t_ns: sample.t_ns,
        lat,
        lon,
        alt,
        vel_ned,
        att,
    })
}

/// Fold [`ins_step`] over the trajectory. Returns `len - 1` states, one per sample after the first.
pub fn propagate(init: &NavState, traj: &Trajectory) -> Result<Vec<NavState>> {
    let samples = traj.samples();
    let mut out = Vec::with_capacity(samples.len() - 1);
    let mut state = *init;
    for (i, w) in samples.windows(2).enumerate() {
        let dt = (w[1].t_ns - w[0].t_ns) as f64 * 1e-9;
        state = ins_step(&state, &w[1], dt).map_err(|e| e.context(format!("sample {}", i + 1)))?;
        out.push(state);
    }
    Ok(out)
}

/// [`propagate`] starting from the default site at the first sample's timestamp.
pub fn propagate_from_default(traj: &Trajectory) -> Result<Vec<NavState>> {
    propagate(&NavState::default_at(traj.samples()[0].t_ns), traj)
}
