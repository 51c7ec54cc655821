//! The state adjustment mechanism: a discrete PID transform applied directly to
//! the raw state signal, the mean-squared state error, and the reward family
//! that maps that error to a scalar reward.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imu_io::{AgentState, N_STATES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 1.0,
            ki: 0.5,
            kd: 0.2,
        }
    }
}

/// Per-channel integrator and previous input. Reset to `default()` at the start of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    pub integral: AgentState,
    pub prev: AgentState,
    pub initialized: bool,
}

/// Apply the PID transform to `s`, returning the adjusted state and the updated PID state.
///
/// The first call after a reset has zero integral and zero derivative, so it
/// returns `kp * s`. Later calls accumulate `s * dt` into the integral
/// (rectangle rule) and take the backward difference against the previous input.
pub fn modulate(
    pid: &PidState,
    gains: &PidGains,
    s: &AgentState,
    dt: f64,
) -> Result<(AgentState, PidState)> {
    if !pid.initialized {
        let adjusted = s.map(|v| gains.kp * v);
        let next = PidState {
            integral: [0.0; N_STATES],
            prev: *s,
            initialized: true,
        };
        return Ok((adjusted, next));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::usage(format!(
            "PID step interval must be positive, got {dt}"
        )));
    }
    let mut adjusted = [0.0; N_STATES];
    let mut integral = pid.integral;
    for c in 0..N_STATES {
        integral[c] += s[c] * dt;
        let derivative = (s[c] - pid.prev[c]) / dt;
        adjusted[c] = gains.kp * s[c] + gains.ki * integral[c] + gains.kd * derivative;
    }
    Ok((
        adjusted,
        PidState {
            integral,
            prev: *s,
            initialized: true,
        },
    ))
}

/// Mean squared difference over the six channels.
pub fn state_error(a: &AgentState, b: &AgentState) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / N_STATES as f64
}

pub const LOSS_FLOOR: f64 = 1e-12;
pub const LOSS_CEIL: f64 = 1e6;
const LOG_POLE_GAP: f64 = 1e-6;
const TRIG_CEIL: f64 = FRAC_PI_2 - 1e-6;

/// Error-to-reward mappings. All are decreasing in the error on their natural domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// `1 / loss`
    InverseProportion,
    /// `1 / (1 + e^loss)`
    #[default]
    Sigmoid,
    /// `1 / ln(loss)`
    InverseLog,
    /// `1 / loss²`
    InverseQuadratic,
    /// `1 / sin(loss)`
    InverseSin,
    /// `1 / cos(loss)`
    InverseCos,
    /// `1 / tan(loss)`
    InverseTan,
}

impl RewardKind {
    pub const ALL: [RewardKind; 7] = [
        RewardKind::InverseProportion,
        RewardKind::Sigmoid,
        RewardKind::InverseLog,
        RewardKind::InverseQuadratic,
        RewardKind::InverseSin,
        RewardKind::InverseCos,
        RewardKind::InverseTan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RewardKind::InverseProportion => "inverse_proportion",
            RewardKind::Sigmoid => "sigmoid",
            RewardKind::InverseLog => "inverse_log",
            RewardKind::InverseQuadratic => "inverse_quadratic",
            RewardKind::InverseSin => "inverse_sin",
            RewardKind::InverseCos => "inverse_cos",
            RewardKind::InverseTan => "inverse_tan",
        }
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RewardKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = RewardKind::ALL.iter().map(|k| k.name()).collect();
                Error::usage(format!(
                    "unknown reward {s:?}; valid names: {}",
                    names.join(", ")
                ))
            })
    }
}

/// Reward for a state error. The error is clamped into `[1e-12, 1e6]` first; the
/// log kind additionally keeps `1e-6` away from 1 and the trigonometric kinds cap
/// the error at `π/2 − 1e-6`, so the result is finite for every `loss >= 0`.
pub fn reward(kind: RewardKind, loss: f64) -> f64 {
    let loss = if loss.is_nan() {
        LOSS_CEIL
    } else {
        loss.clamp(LOSS_FLOOR, LOSS_CEIL)
    };
    match kind {
        RewardKind::InverseProportion => 1.0 / loss,
        // e^-x / (1 + e^-x) avoids the overflow of e^x; it underflows to 0 past x ≈ 745.
        RewardKind::Sigmoid => {
            let e = (-loss).exp();
            e / (1.0 + e)
        }
        RewardKind::InverseLog => {
            let l = if (loss - 1.0).abs() < LOG_POLE_GAP {
                if loss < 1.0 {
                    1.0 - LOG_POLE_GAP
                } else {
                    1.0 + LOG_POLE_GAP
                }
            } else {
                loss
            };
            1.0 / l.ln()
        }
        RewardKind::InverseQuadratic => 1.0 / (loss * loss),
        RewardKind::InverseSin => 1.0 / loss.min(TRIG_CEIL).sin(),
        RewardKind::InverseCos => 1.0 / loss.min(TRIG_CEIL).cos(),
        RewardKind::InverseTan => 1.0 / loss.min(TRIG_CEIL).tan(),
    }
}

/// Per-channel mean and standard deviation used for optional z-score normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: AgentState,
    pub std: AgentState,
}

impl ChannelStats {
    pub fn from_states(states: &[AgentState]) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::usage(
                "cannot compute channel statistics of no states",
            ));
        }
        let n = states.len() as f64;
        let mut mean = [0.0; N_STATES];
        for s in states {
            for c in 0..N_STATES {
                mean[c] += s[c] / n;
            }
        }
        let mut var = [0.0; N_STATES];
        for s in states {
            for c in 0..N_STATES {
                var[c] += (s[c] - mean[c]).powi(2) / n;
            }
        }
        // Constant channels are only centred.
        let std = var.map(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
        Ok(Self { mean, std })
    }

    pub fn apply(&self, s: &AgentState) -> AgentState {
        std::array::from_fn(|c| (s[c] - self.mean[c]) / self.std[c])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ONES: AgentState = [1.0; N_STATES];

    fn run(gains: &PidGains, signal: &[AgentState], dts: &[f64]) -> Vec<AgentState> {
        let mut pid = PidState::default();
        signal
            .iter()
            .zip(dts)
            .map(|(s, dt)| {
                let (out, next) = modulate(&pid, gains, s, *dt).unwrap();
                pid = next;
                out
            })
            .collect()
    }

    #[test]
    fn first_call_is_proportional_only() {
        let x = [0.3, -1.0, 2.0, 9.8, 0.0, -4.0];
        let gains = PidGains {
            kp: 1.0,
            ki: 7.0,
            kd: -3.0,
        };
        let (out, pid) = modulate(&PidState::default(), &gains, &x, 0.0).unwrap();
        assert_eq!(out, x);
        assert!(pid.initialized);
        assert_eq!(pid.integral, [0.0; N_STATES]);
        assert_eq!(pid.prev, x);
    }

    #[test]
    fn constant_signal_second_call() {
        let out = run(&PidGains::default(), &[ONES, ONES], &[1.0, 1.0]);
        assert_eq!(out[1], [1.5; N_STATES]);
    }

    #[test]
    fn rejects_non_positive_dt_once_initialized() {
        let (_, pid) = modulate(&PidState::default(), &PidGains::default(), &ONES, 0.0).unwrap();
        for dt in [0.0, -0.1] {
            let err = modulate(&pid, &PidGains::default(), &ONES, dt).unwrap_err();
            assert!(matches!(err, Error::Usage(_)));
        }
    }

    #[test]
    fn state_error_examples() {
        let z = [0.0; N_STATES];
        assert_eq!(state_error(&ONES, &ONES), 0.0);
        assert_eq!(state_error(&ONES, &z), 1.0);
        assert_eq!(state_error(&[3.0, 0.0, 0.0, 0.0, 0.0, 0.0], &z), 1.5);
    }

    #[test]
    fn reward_examples() {
        assert!((reward(RewardKind::Sigmoid, 0.0) - 0.5).abs() < 1e-9);
        assert_eq!(reward(RewardKind::InverseProportion, 2.0), 0.5);
        assert_eq!(reward(RewardKind::InverseQuadratic, 2.0), 0.25);
        assert!((reward(RewardKind::InverseLog, std::f64::consts::E) - 1.0).abs() < 1e-15);
        assert!((reward(RewardKind::InverseCos, 0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reward_names_round_trip() {
        for k in RewardKind::ALL {
            assert_eq!(k.name().parse::<RewardKind>().unwrap(), k);
            assert_eq!(
                serde_json::to_string(&k).unwrap(),
                format!("\"{}\"", k.name())
            );
        }
        let err = "softplus".parse::<RewardKind>().unwrap_err().to_string();
        for k in RewardKind::ALL {
            assert!(err.contains(k.name()));
        }
    }

    #[test]
    fn reward_finite_at_poles_and_extremes() {
        for k in RewardKind::ALL {
            for loss in [
                0.0,
                1e-12,
                0.5,
                1.0,
                2.0,
                1e6,
                1e300,
                f64::INFINITY,
                FRAC_PI_2,
            ] {
                assert!(reward(k, loss).is_finite(), "{k} at {loss}");
            }
        }
    }

    #[test]
    fn z_score_stats() {
        let states = [
            [1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            [3.0, 2.0, 5.0, 4.0, 7.0, 6.0],
        ];
        let st = ChannelStats::from_states(&states).unwrap();
        assert_eq!(st.mean, [2.0, 2.0, 4.0, 4.0, 6.0, 6.0]);
        assert_eq!(st.std, [1.0; N_STATES]);
        assert_eq!(st.apply(&states[0]), [-1.0, 0.0, -1.0, 0.0, -1.0, 0.0]);
    }

    fn signal() -> impl Strategy<Value = Vec<AgentState>> {
        prop::collection::vec(prop::array::uniform6(-10.0f64..10.0), 1..40)
    }

    proptest! {
        #[test]
        fn modulate_is_linear(
            x in signal(), y_seed in prop::array::uniform6(-5.0f64..5.0),
            alpha in -3.0f64..3.0, beta in -3.0f64..3.0,
            dt in 0.005f64..0.5,
        ) {
            let y: Vec<AgentState> = x.iter().enumerate()
                .map(|(i, s)| std::array::from_fn(|c| y_seed[c] * (i as f64 + 1.0).sin() - 0.1 * s[c]))
                .collect();
            let mix: Vec<AgentState> = x.iter().zip(&y)
                .map(|(a, b)| std::array::from_fn(|c| alpha * a[c] + beta * b[c]))
                .collect();
            let dts = vec![dt; x.len()];
            let g = PidGains::default();
            let (ox, oy, om) = (run(&g, &x, &dts), run(&g, &y, &dts), run(&g, &mix, &dts));
            for i in 0..x.len() {
                for c in 0..N_STATES {
                    let want = alpha * ox[i][c] + beta * oy[i][c];
                    let scale = (alpha * ox[i][c]).abs() + (beta * oy[i][c]).abs();
                    prop_assert!((om[i][c] - want).abs() <= 1e-12 * scale.max(1.0));
                }
            }
        }

        #[test]
        fn proportional_gain_one_is_identity(x in signal(), dt in 0.001f64..1.0) {
            let out = run(&PidGains { kp: 1.0, ki: 0.0, kd: 0.0 }, &x, &vec![dt; x.len()]);
            prop_assert_eq!(out, x);
        }

        #[test]
        fn state_error_metric(a in prop::array::uniform6(-1e3f64..1e3), b in prop::array::uniform6(-1e3f64..1e3)) {
            let e = state_error(&a, &b);
            prop_assert!(e >= 0.0);
            prop_assert_eq!(e, state_error(&b, &a));
            prop_assert_eq!(state_error(&a, &a), 0.0);
            prop_assert_eq!(e == 0.0, a == b);
        }

        #[test]
        fn sigmoid_reward_decreasing_and_bounded(l1 in 0.0f64..700.0, gap in 1e-6f64..10.0) {
            let (r1, r2) = (reward(RewardKind::Sigmoid, l1), reward(RewardKind::Sigmoid, l1 + gap));
            prop_assert!(r2 < r1);
            prop_assert!(r1 > 0.0 && r1 <= 0.5);
        }

        #[test]
        fn rewards_always_finite(loss in prop_oneof![0.0f64..3.0, 0.0f64..1e7, Just(0.0), Just(1.0)]) {
            for k in RewardKind::ALL {
                prop_assert!(reward(k, loss).is_finite());
            }
        }

        #[test]
        fn reset_replays_identically(x in signal(), dt in 0.001f64..1.0) {
            let g = PidGains { kp: 0.7, ki: 1.3, kd: -0.4 };
            let dts = vec![dt; x.len()];
            prop_assert_eq!(run(&g, &x, &dts), run(&g, &x, &dts));
        }
    }
}
