//! Two-layer value network (6 → 10 relu → 2) with hand-written backpropagation
//! and an adaptive-moment optimizer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imu_io::{AgentState, N_STATES};

pub const HIDDEN: usize = 10;
pub const N_ACTIONS: usize = 2;
/// Total scalar parameter count: W1, b1, W2, b2.
pub const N_PARAMS: usize = HIDDEN * N_STATES + HIDDEN + N_ACTIONS * HIDDEN + N_ACTIONS;

const INIT_STD: f64 = 0.1;

/// Network parameters. Gradients reuse this type since they have identical shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub w1: [[f64; N_STATES]; HIDDEN],
    pub b1: [f64; HIDDEN],
    pub w2: [[f64; HIDDEN]; N_ACTIONS],
    pub b2: [f64; N_ACTIONS],
}

pub type Gradients = QNetwork;

impl QNetwork {
    pub fn zeros() -> Self {
        Self {
            w1: [[0.0; N_STATES]; HIDDEN],
            b1: [0.0; HIDDEN],
            w2: [[0.0; HIDDEN]; N_ACTIONS],
            b2: [0.0; N_ACTIONS],
        }
    }

    /// Weights ~ N(0, 0.1²) from a seeded generator, biases zero.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut net = Self::zeros();
        for w in net
            .w1
            .iter_mut()
            .flatten()
            .chain(net.w2.iter_mut().flatten())
        {
            *w = normal.sample(&mut rng);
        }
        net
    }

    /// Parameters in serialization order: W1 row-major, b1, W2 row-major, b2.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .flatten()
            .chain(&self.b1)
            .chain(self.w2.iter().flatten())
            .chain(&self.b2)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .flatten()
            .chain(&mut self.b1)
            .chain(self.w2.iter_mut().flatten())
            .chain(&mut self.b2)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.params().copied().collect()
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.len() != N_PARAMS {
            return Err(Error::data(format!(
                "expected {N_PARAMS} network parameters, found {}",
                values.len()
            )));
        }
        let mut net = Self::zeros();
        for (p, v) in net.params_mut().zip(values) {
            *p = *v;
        }
        Ok(net)
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    fn hidden_pre(&self, s: &AgentState) -> [f64; HIDDEN] {
        std::array::from_fn(|j| {
            self.b1[j] + self.w1[j].iter().zip(s).map(|(w, x)| w * x).sum::<f64>()
        })
    }

    /// Q-values for both actions.
    pub fn forward(&self, s: &AgentState) -> [f64; N_ACTIONS] {
        let h = self.hidden_pre(s).map(|z| z.max(0.0));
        std::array::from_fn(|a| {
            self.b2[a] + self.w2[a].iter().zip(&h).map(|(w, x)| w * x).sum::<f64>()
        })
    }

    /// Overwrite every parameter with `source`'s.
    pub fn copy_from(&mut self, source: &QNetwork) {
        self.clone_from(source);
    }
}

/// Mean over the batch of `(Q(s_i)[a_i] − y_i)²` and its exact gradient.
pub fn loss_and_gradients(
    net: &QNetwork,
    states: &[AgentState],
    actions: &[usize],
    targets: &[f64],
) -> Result<(f64, Gradients)> {
    if states.is_empty() {
        return Err(Error::usage("empty batch"));
    }
    if states.len() != actions.len() || states.len() != targets.len() {
        return Err(Error::usage(format!(
            "batch length mismatch: {} states, {} actions, {} targets",
            states.len(),
            actions.len(),
            targets.len()
        )));
    }
    if let Some(a) = actions.iter().find(|a| **a >= N_ACTIONS) {
        return Err(Error::usage(format!("action index {a} out of range")));
    }

    let n = states.len() as f64;
    let mut loss = 0.0;
    let mut g = QNetwork::zeros();
    for ((s, &a), &y) in states.iter().zip(actions).zip(targets) {
        let z = net.hidden_pre(s);
        let h = z.map(|v| v.max(0.0));
        let q = net.b2[a] + net.w2[a].iter().zip(&h).map(|(w, x)| w * x).sum::<f64>();
        let diff = q - y;
        loss += diff * diff / n;

        let dq = 2.0 * diff / n;
        g.b2[a] += dq;
        for j in 0..HIDDEN {
            g.w2[a][j] += dq * h[j];
            if z[j] > 0.0 {
                let dz = dq * net.w2[a][j];
                g.b1[j] += dz;
                for (gw, x) in g.w1[j].iter_mut().zip(s) {
                    *gw += dz * x;
                }
            }
        }
    }
    Ok((loss, g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    /// Fixed-step gradient descent, `θ ← θ − lr·g`.
    Sgd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: QNetwork,
    pub v: QNetwork,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: QNetwork::zeros(),
            v: QNetwork::zeros(),
            step: 0,
        }
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::Adam, lr)
    }

    /// Apply one update to `net` in place.
    pub fn step(&mut self, net: &mut QNetwork, grads: &Gradients) {
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in net.params_mut().zip(grads.params()) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let c1 = 1.0 - self.beta1.powi(t);
                let c2 = 1.0 - self.beta2.powi(t);
                let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
                let moments = self.m.params_mut().zip(self.v.params_mut());
                for ((p, g), (m, v)) in net.params_mut().zip(grads.params()).zip(moments) {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}
