//! The DQM decision loop: ε-greedy choice between adjusting and passing the
//! state through, the environment transition that applies that choice, a ring
//! replay buffer, and Q-learning updates against a periodically synced target
//! network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Hyperparams;
use crate::error::{Error, Result};
use crate::imu_io::AgentState;
use crate::modulation::{modulate, reward, state_error, PidGains, PidState, RewardKind};
use crate::qnet::{loss_and_gradients, OptimizerState, QNetwork, N_ACTIONS};

/// Fixed reward and stored error for leaving the state unadjusted.
pub const PASS_REWARD: f64 = 1.0;
pub const PASS_ERROR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Adjust = 0,
    NoAdjust = 1,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Adjust, Action::NoAdjust];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Action::Adjust),
            1 => Some(Action::NoAdjust),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: AgentState,
    pub action: Action,
    pub reward: f64,
    pub next_state: AgentState,
}

/// Fixed-capacity FIFO store; once full, each write replaces the oldest entry.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    slots: Vec<Transition>,
    capacity: usize,
    cursor: usize,
    total_writes: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            slots: Vec::with_capacity(capacity),
            capacity,
            cursor: 0,
            total_writes: 0,
        }
    }

    pub fn store(&mut self, tr: Transition) {
        if self.slots.len() < self.capacity {
            self.slots.push(tr);
        } else {
            self.slots[self.cursor] = tr;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        self.total_writes += 1;
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total_writes(&self) -> u64 {
        self.total_writes
    }

    pub fn slot(&self, i: usize) -> Option<&Transition> {
        self.slots.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.slots.iter()
    }

    /// `n` uniform draws with replacement, or `None` while fewer than `n` are stored.
    pub fn sample_batch<R: Rng>(&self, n: usize, rng: &mut R) -> Option<Vec<Transition>> {
        if self.slots.len() < n || n == 0 {
            return None;
        }
        Some(
            (0..n)
                .map(|_| self.slots[rng.gen_range(0..self.slots.len())])
                .collect(),
        )
    }
}

/// Result of one environment transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: AgentState,
    pub reward: f64,
    pub error: f64,
    pub pid: PidState,
}

/// Apply `action` at index `t` of the state stream.
///
/// Adjust: the PID-adjusted `states[t]` becomes the next state and is scored
/// against `states[t + 1]`. NoAdjust: the dataset's next state is passed through
/// with error 1 and reward 1, and the PID state is left untouched.
pub fn env_step(
    t: usize,
    action: Action,
    states: &[AgentState],
    pid: &PidState,
    gains: &PidGains,
    dt: f64,
    reward_kind: RewardKind,
) -> Result<StepOutcome> {
    if t + 1 >= states.len() {
        return Err(Error::usage(format!(
            "step {t} has no successor in a stream of {} states",
            states.len()
        )));
    }
    match action {
        Action::Adjust => {
            let (adjusted, pid) = modulate(pid, gains, &states[t], dt)?;
            let error = state_error(&adjusted, &states[t + 1]);
            Ok(StepOutcome {
                next_state: adjusted,
                reward: reward(reward_kind, error),
                error,
                pid,
            })
        }
        Action::NoAdjust => Ok(StepOutcome {
            next_state: states[t + 1],
            reward: PASS_REWARD,
            error: PASS_ERROR,
            pid: *pid,
        }),
    }
}

/// Index of the largest Q-value; ties go to the lowest index.
pub fn argmax(q: &[f64; N_ACTIONS]) -> usize {
    let mut best = 0;
    for a in 1..N_ACTIONS {
        if q[a] > q[best] {
            best = a;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub eval_net: QNetwork,
    pub target_net: QNetwork,
    pub optimizer: OptimizerState,
    pub buffer: ReplayBuffer,
    pub learn_counter: u64,
    pub hyper: Hyperparams,
    pub rng: ChaCha8Rng,
}

impl Agent {
    /// Fresh agent: network weights from `hyper.seed`, decision RNG on a separate stream.
    pub fn new(hyper: Hyperparams) -> Result<Self> {
        hyper.validate()?;
        let eval_net = QNetwork::init(hyper.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        rng.set_stream(1);
        Ok(Self {
            target_net: eval_net.clone(),
            eval_net,
            optimizer: OptimizerState::new(hyper.optimizer, hyper.lr),
            buffer: ReplayBuffer::new(hyper.memory_capacity),
            learn_counter: 0,
            hyper,
            rng,
        })
    }

    /// Greedy with probability `epsilon`, otherwise uniform over both actions.
    pub fn choose_action(&mut self, s: &AgentState) -> Action {
        let a = if self.rng.gen::<f64>() < self.hyper.epsilon {
            argmax(&self.eval_net.forward(s))
        } else {
            self.rng.gen_range(0..N_ACTIONS)
        };
        Action::from_index(a).expect("action index in range")
    }

    pub fn store(&mut self, tr: Transition) {
        self.buffer.store(tr);
    }

    fn ready(&self) -> bool {
        let need = if self.hyper.learn_after_full {
            self.buffer.capacity().max(self.hyper.batch_size)
        } else {
            self.hyper.batch_size
        };
        self.buffer.len() >= need
    }

    /// One Q-learning update. Returns the TD loss, or `None` if the buffer is not ready yet.
    pub fn learn(&mut self) -> Option<f64> {
        if !self.ready() {
            return None;
        }
        if self
            .learn_counter
            .is_multiple_of(self.hyper.target_replace_iter)
        {
            self.target_net.copy_from(&self.eval_net);
        }
        let batch = self
            .buffer
            .sample_batch(self.hyper.batch_size, &mut self.rng)?;

        let gamma = self.hyper.gamma;
        let states: Vec<AgentState> = batch.iter().map(|t| t.state).collect();
        let actions: Vec<usize> = batch.iter().map(|t| t.action.index()).collect();
        let targets: Vec<f64> = batch
            .iter()
            .map(|t| {
                let q_next = self.target_net.forward(&t.next_state);
                t.reward + gamma * q_next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();

        let (loss, grads) = loss_and_gradients(&self.eval_net, &states, &actions, &targets)
            .expect("batch is non-empty and consistent");
        self.optimizer.step(&mut self.eval_net, &grads);
        self.learn_counter += 1;
        Some(loss)
    }
}
