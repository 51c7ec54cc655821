//! Episode orchestration, training and validation runs, and curve export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::agent::{env_step, Action, Agent, Transition};
use crate::checkpoint::{write_atomic, Checkpoint, TrainingMeta};
use crate::config::Hyperparams;
use crate::error::{Error, Result};
use crate::imu_io::{to_agent_states, AgentState, Trajectory};
use crate::modulation::{ChannelStats, PidState};

/// Per-episode record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeLog {
    /// 1-based episode number.
    pub episode: usize,
    pub steps: usize,
    pub total_reward: f64,
    /// `(step, td_loss)` for every step on which a learning update ran.
    pub step_losses: Vec<(usize, f64)>,
    /// Indexed by [`Action::index`].
    pub action_counts: [u64; 2],
    /// Reward summed per action, indexed like `action_counts`.
    pub reward_by_action: [f64; 2],
    /// Mean state error over Adjust steps, `None` if the agent never adjusted.
    pub mean_error_adjust: Option<f64>,
}

impl EpisodeLog {
    pub fn mean_loss(&self) -> Option<f64> {
        if self.step_losses.is_empty() {
            return None;
        }
        Some(self.step_losses.iter().map(|(_, l)| l).sum::<f64>() / self.step_losses.len() as f64)
    }
}

/// Run one pass over `states`; `dts[t]` is the interval from state `t` to `t + 1`.
pub fn run_episode(
    agent: &mut Agent,
    states: &[AgentState],
    dts: &[f64],
    episode: usize,
) -> Result<EpisodeLog> {
    if states.len() < 2 {
        return Err(Error::usage(format!(
            "an episode needs at least 2 states, got {}",
            states.len()
        )));
    }
    if dts.len() != states.len() - 1 {
        return Err(Error::usage(format!(
            "{} intervals supplied for {} states",
            dts.len(),
            states.len()
        )));
    }
    let gains = agent.hyper.gains();
    let reward_kind = agent.hyper.reward_kind;
    let mut pid = PidState::default();
    let mut log = EpisodeLog {
        episode,
        steps: 0,
        total_reward: 0.0,
        step_losses: Vec::new(),
        action_counts: [0; 2],
        reward_by_action: [0.0; 2],
        mean_error_adjust: None,
    };
    let mut adjust_error_sum = 0.0;

    for t in 0..states.len() - 1 {
        let s = states[t];
        let action = agent.choose_action(&s);
        let out = env_step(t, action, states, &pid, &gains, dts[t], reward_kind)
            .map_err(|e| e.context(format!("step {t}")))?;
        pid = out.pid;
        agent.store(Transition {
            state: s,
            action,
            reward: out.reward,
            next_state: out.next_state,
        });
        if let Some(loss) = agent.learn() {
            log.step_losses.push((t, loss));
        }

        log.steps += 1;
        log.total_reward += out.reward;
        log.action_counts[action.index()] += 1;
        log.reward_by_action[action.index()] += out.reward;
        if action == Action::Adjust {
            adjust_error_sum += out.error;
        }
    }
    let n_adjust = log.action_counts[Action::Adjust.index()];
    if n_adjust > 0 {
        log.mean_error_adjust = Some(adjust_error_sum / n_adjust as f64);
    }
    Ok(log)
}

fn prepare_states(hyper: &Hyperparams, traj: &Trajectory) -> Result<Vec<AgentState>> {
    let states = to_agent_states(traj);
    if !hyper.normalize_states {
        return Ok(states);
    }
    let stats = ChannelStats::from_states(&states)?;
    Ok(states.iter().map(|s| stats.apply(s)).collect())
}

fn run_episodes(
    agent: &mut Agent,
    traj: &Trajectory,
    episodes: usize,
    mut on_episode: impl FnMut(&EpisodeLog),
) -> Result<Vec<EpisodeLog>> {
    let states = prepare_states(&agent.hyper, traj)?;
    let dts = traj.dts();
    (1..=episodes)
        .map(|ep| {
            let log = run_episode(agent, &states, &dts, ep)
                .map_err(|e| e.context(format!("episode {ep}")))?;
            on_episode(&log);
            Ok(log)
        })
        .collect()
}

fn snapshot(agent: &Agent, episodes_completed: usize, fingerprint: String) -> Checkpoint {
    Checkpoint {
        hyper: agent.hyper.clone(),
        eval_net: agent.eval_net.clone(),
        target_net: agent.target_net.clone(),
        optimizer: agent.optimizer.clone(),
        meta: TrainingMeta {
            episodes_completed,
            learn_counter: agent.learn_counter,
            seed: agent.hyper.seed,
            data_fingerprint: fingerprint,
        },
    }
}

/// Train a fresh seeded agent for `hyper.episodes` passes over `traj`.
pub fn train(hyper: &Hyperparams, traj: &Trajectory) -> Result<(Checkpoint, Vec<EpisodeLog>)> {
    train_with(hyper, traj, |_| {})
}

/// [`train`] with a callback invoked after each episode.
pub fn train_with(
    hyper: &Hyperparams,
    traj: &Trajectory,
    on_episode: impl FnMut(&EpisodeLog),
) -> Result<(Checkpoint, Vec<EpisodeLog>)> {
    let mut agent = Agent::new(hyper.clone())?;
    let logs = run_episodes(&mut agent, traj, hyper.episodes, on_episode)?;
    Ok((snapshot(&agent, logs.len(), traj.fingerprint()), logs))
}

/// Rebuild an agent from a checkpoint. The replay buffer starts empty and the
/// decision RNG continues on a stream reserved for post-training runs.
pub fn restore_agent(ckpt: &Checkpoint) -> Result<Agent> {
    ckpt.hyper.check_shapes()?;
    if !(ckpt.eval_net.is_finite() && ckpt.target_net.is_finite()) {
        return Err(Error::data("checkpoint contains non-finite parameters"));
    }
    let mut agent = Agent::new(ckpt.hyper.clone()).map_err(|e| match e {
        Error::Usage(m) => Error::data(format!("checkpoint hyperparameters invalid: {m}")),
        other => other,
    })?;
    agent.eval_net = ckpt.eval_net.clone();
    agent.target_net = ckpt.target_net.clone();
    agent.optimizer = ckpt.optimizer.clone();
    agent.learn_counter = ckpt.meta.learn_counter;
    let mut rng = ChaCha8Rng::seed_from_u64(ckpt.meta.seed);
    rng.set_stream(2);
    agent.rng = rng;
    Ok(agent)
}

/// Validation protocol: continue learning from the checkpoint over `traj` for `episodes` passes.
pub fn evaluate(ckpt: &Checkpoint, traj: &Trajectory, episodes: usize) -> Result<Vec<EpisodeLog>> {
    evaluate_with(ckpt, traj, episodes, |_| {}).map(|(_, logs)| logs)
}

/// [`evaluate`] with a per-episode callback; also returns the checkpoint after the run.
pub fn evaluate_with(
    ckpt: &Checkpoint,
    traj: &Trajectory,
    episodes: usize,
    on_episode: impl FnMut(&EpisodeLog),
) -> Result<(Checkpoint, Vec<EpisodeLog>)> {
    if episodes == 0 {
        return Err(Error::usage("episodes must be positive"));
    }
    let mut agent = restore_agent(ckpt)?;
    let logs = run_episodes(&mut agent, traj, episodes, on_episode)?;
    let done = ckpt.meta.episodes_completed + logs.len();
    Ok((
        snapshot(&agent, done, ckpt.meta.data_fingerprint.clone()),
        logs,
    ))
}

pub const REWARD_CURVE: &str = "reward_curve.csv";
pub const LOSS_CURVE: &str = "loss_curve.csv";

/// Write `reward_curve.csv` (episode, total_reward, cumulative_reward) and
/// `loss_curve.csv` (episode, step, td_loss) into `dir`. With `svg`, also
/// write simple line charts of total reward and mean loss per episode.
pub fn export_curves(logs: &[EpisodeLog], dir: &Path, svg: bool) -> Result<()> {
    if logs.is_empty() {
        return Err(Error::usage("no episode logs to export"));
    }
    fs::create_dir_all(dir)?;

    let mut reward = String::from("episode,total_reward,cumulative_reward\n");
    let mut cumulative = 0.0;
    for log in logs {
        cumulative += log.total_reward;
        writeln!(
            reward,
            "{},{},{}",
            log.episode, log.total_reward, cumulative
        )
        .unwrap();
    }
    write_atomic(&dir.join(REWARD_CURVE), reward.as_bytes())?;

    let mut loss = String::from("episode,step,td_loss\n");
    for log in logs {
        for (step, l) in &log.step_losses {
            writeln!(loss, "{},{},{}", log.episode, step, l).unwrap();
        }
    }
    write_atomic(&dir.join(LOSS_CURVE), loss.as_bytes())?;

    if svg {
        let rewards: Vec<(f64, f64)> = logs
            .iter()
            .map(|l| (l.episode as f64, l.total_reward))
            .collect();
        let losses: Vec<(f64, f64)> = logs
            .iter()
            .filter_map(|l| l.mean_loss().map(|m| (l.episode as f64, m)))
            .collect();
        write_atomic(
            &dir.join("reward_curve.svg"),
            line_chart("total reward", &rewards).as_bytes(),
        )?;
        write_atomic(
            &dir.join("loss_curve.svg"),
            line_chart("mean TD loss", &losses).as_bytes(),
        )?;
    }
    Ok(())
}

fn line_chart(title: &str, points: &[(f64, f64)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{title}</text>\n\
         <line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>\n",
        W / 2.0,
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD
    );
    if !points.is_empty() {
        let fold = |f: fn(f64, f64) -> f64, init: f64, sel: fn(&(f64, f64)) -> f64| {
            points.iter().map(sel).fold(init, f)
        };
        let (x0, x1) = (
            fold(f64::min, f64::INFINITY, |p| p.0),
            fold(f64::max, f64::NEG_INFINITY, |p| p.0),
        );
        let (y0, y1) = (
            fold(f64::min, f64::INFINITY, |p| p.1),
            fold(f64::max, f64::NEG_INFINITY, |p| p.1),
        );
        let sx = if x1 > x0 {
            (W - 2.0 * PAD) / (x1 - x0)
        } else {
            0.0
        };
        let sy = if y1 > y0 {
            (H - 2.0 * PAD) / (y1 - y0)
        } else {
            0.0
        };
        let path: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", PAD + (x - x0) * sx, H - PAD - (y - y0) * sy))
            .collect();
        writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{}\"/>\n\
             <text x=\"{PAD}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{y0:.4e}</text>\n\
             <text x=\"{PAD}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{y1:.4e}</text>",
            path.join(" "),
            H - PAD + 16.0,
            PAD - 6.0
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}
