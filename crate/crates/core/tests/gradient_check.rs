//! Analytic backpropagation against central finite differences.

use dqm_core::imu_io::AgentState;
use dqm_core::qnet::{loss_and_gradients, QNetwork, HIDDEN, N_ACTIONS, N_PARAMS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const KINK_GAP: f64 = 1e-3;

/// Loss evaluated from scratch, without touching the gradient code path.
fn batch_loss(params: &[f64], states: &[AgentState], actions: &[usize], targets: &[f64]) -> f64 {
    let net = QNetwork::from_slice(params).unwrap();
    let n = states.len() as f64;
    states
        .iter()
        .zip(actions)
        .zip(targets)
        .map(|((s, &a), &y)| (net.forward(s)[a] - y).powi(2) / n)
        .sum()
}

struct Case {
    net: QNetwork,
    states: Vec<AgentState>,
    actions: Vec<usize>,
    targets: Vec<f64>,
}

/// Random network and batch with every hidden pre-activation at least `KINK_GAP` from zero.
fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = QNetwork::init(seed);
    for b in net.b1.iter_mut().chain(&mut net.b2) {
        *b = rng.gen_range(-0.3..0.3);
    }
    let batch = rng.gen_range(1..=32);
    let mut states = Vec::with_capacity(batch);
    while states.len() < batch {
        let s: AgentState = std::array::from_fn(|c| {
            if c < 3 {
                rng.gen_range(-1.0..1.0)
            } else {
                rng.gen_range(-12.0..12.0)
            }
        });
        let clear = (0..HIDDEN).all(|j| {
            let z = net.b1[j] + net.w1[j].iter().zip(&s).map(|(w, x)| w * x).sum::<f64>();
            z.abs() > KINK_GAP
        });
        if clear {
            states.push(s);
        }
    }
    let actions = (0..batch).map(|_| rng.gen_range(0..N_ACTIONS)).collect();
    let targets = (0..batch).map(|_| rng.gen_range(-3.0..3.0)).collect();
    Case {
        net,
        states,
        actions,
        targets,
    }
}

fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-10 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

#[test]
fn analytic_gradients_match_central_differences() {
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let case = random_case(seed);
        let (_, grads) =
            loss_and_gradients(&case.net, &case.states, &case.actions, &case.targets).unwrap();
        let analytic = grads.to_vec();
        let base = case.net.to_vec();
        for k in 0..N_PARAMS {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[k] += H;
            minus[k] -= H;
            let numeric = (batch_loss(&plus, &case.states, &case.actions, &case.targets)
                - batch_loss(&minus, &case.states, &case.actions, &case.targets))
                / (2.0 * H);
            let err = relative_error(analytic[k], numeric);
            worst = worst.max(err);
            assert!(
                err <= 1e-4,
                "seed {seed} param {k}: analytic {} numeric {numeric} rel {err}",
                analytic[k]
            );
        }
    }
    eprintln!("worst relative gradient error: {worst:.3e}");
}

#[test]
fn reported_loss_matches_recomputation() {
    for seed in 0..10 {
        let case = random_case(seed);
        let (loss, _) =
            loss_and_gradients(&case.net, &case.states, &case.actions, &case.targets).unwrap();
        let again = batch_loss(
            &case.net.to_vec(),
            &case.states,
            &case.actions,
            &case.targets,
        );
        assert!((loss - again).abs() <= 1e-12 * (1.0 + again));
    }
}
