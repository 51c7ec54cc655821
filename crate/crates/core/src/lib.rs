//! PID-modulated deep Q-learning (DQM) over strapdown inertial navigation data.
//!
//! The agent observes raw six-channel IMU states and, at every sample, either
//! passes the state through or replaces it with a PID-adjusted version. The
//! reward is tied to how far the adjusted state lands from the next logged
//! state. The crate also carries the inertial mechanization used to turn IMU
//! logs into navigation solutions.

pub mod agent;
pub mod checkpoint;
pub mod config;
pub mod earth;
pub mod error;
pub mod imu_io;
pub mod ins;
pub mod modulation;
pub mod qnet;
pub mod trainer;

pub use agent::{Action, Agent, ReplayBuffer, Transition};
pub use checkpoint::Checkpoint;
pub use config::Hyperparams;
pub use error::{Error, Result};
pub use imu_io::{AgentState, ImuSample, Profile, Trajectory};
pub use ins::{Attitude, NavState};
pub use modulation::{PidGains, PidState, RewardKind};
pub use qnet::{OptimizerState, QNetwork};
pub use trainer::EpisodeLog;

/// Three-component vector.
pub type Vec3 = [f64; 3];
