use rand::Rng;

use crate::env::{Action, Observation};
use crate::error::{Error, Result};
use crate::nn::softmax;

use super::network::{ActorCritic, N_ACTIONS};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Observation,
    pub action: Action,
    pub reward: f64,
}

/// Up to `capacity` consecutive transitions plus how the segment ended.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    capacity: usize,
    pub transitions: Vec<Transition>,
    pub terminal: bool,
    /// State following the last transition, used for bootstrapping.
    pub next_state: Option<Observation>,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            transitions: Vec::with_capacity(capacity),
            terminal: false,
            next_state: None,
        }
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
        self.terminal = false;
        self.next_state = None;
    }

    pub fn is_full(&self) -> bool {
        self.transitions.len() >= self.capacity
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        debug_assert!(!self.is_full());
        self.transitions.push(t);
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward).collect()
    }
}

fn check_simplex(pi: &[f64]) -> Result<()> {
    let sum: f64 = pi.iter().sum();
    if pi.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::NonFinite("policy distribution"));
    }
    Ok(())
}

/// Inverse-CDF sample from `pi`.
pub fn sample_action<R: Rng + ?Sized>(pi: &[f64; N_ACTIONS], rng: &mut R) -> Result<Action> {
    check_simplex(pi)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in pi.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(Action::from_index(i).expect("index < 3"));
        }
    }
    // u landed in the rounding gap above the cumulative sum; take the last
    // action with positive mass.
    let last = pi.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    Ok(Action::from_index(last).expect("index < 3"))
}

/// Argmax with lowest-index tie-break.
pub fn greedy_action(pi: &[f64; N_ACTIONS]) -> Result<Action> {
    check_simplex(pi)?;
    let mut best = 0;
    for i in 1..N_ACTIONS {
        if pi[i] > pi[best] {
            best = i;
        }
    }
    Ok(Action::from_index(best).expect("index < 3"))
}

/// Reverse accumulation `R ← r + γR` from `bootstrap`, and advantages `R − V(s)`.
pub fn n_step_returns(
    rewards: &[f64],
    values: &[f64],
    gamma: f64,
    bootstrap: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.is_empty() {
        return Err(Error::EmptyInput("n_step_returns"));
    }
    if values.len() != rewards.len() {
        return Err(Error::ShapeMismatch {
            context: "n-step values",
            expected: rewards.len(),
            got: values.len(),
        });
    }
    let mut returns = vec![0.0; rewards.len()];
    let mut r = bootstrap;
    for t in (0..rewards.len()).rev() {
        r = rewards[t] + gamma * r;
        returns[t] = r;
    }
    let advantages = returns.iter().zip(values).map(|(r, v)| r - v).collect();
    Ok((returns, advantages))
}

/// Buffer loss `Σ (R−V)² + (−ln π(a|s))·δ − β·H[π(·|s)]` and its gradient in
/// `ActorCritic::to_flat` order. `advantages` enter the policy term as
/// constants; only the value term differentiates through the critic.
pub fn loss_and_grads(
    net: &ActorCritic,
    buffer: &RolloutBuffer,
    returns: &[f64],
    advantages: &[f64],
    entropy_beta: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = buffer.len();
    if returns.len() != n || advantages.len() != n {
        return Err(Error::ShapeMismatch {
            context: "loss inputs",
            expected: n,
            got: returns.len().min(advantages.len()),
        });
    }
    let n_actor = net.actor.param_count().total();
    let n_critic = net.critic.param_count().total();
    let mut grad_actor = vec![0.0; n_actor];
    let mut grad_critic = vec![0.0; n_critic];
    let mut loss = 0.0;
    let mut scratch = Vec::with_capacity(n_actor.max(n_critic));

    for (k, tr) in buffer.transitions.iter().enumerate() {
        let state = tr.state.as_slice();
        let a_cache = net.actor.forward(state);
        let c_cache = net.critic.forward(state);
        let pi = softmax(&a_cache.out);
        let value = c_cache.out[0];
        let delta_v = returns[k] - value;
        let adv = advantages[k];
        let a = tr.action.index();

        let entropy: f64 = -pi.iter().map(|p| p * p.ln()).sum::<f64>();
        loss += delta_v * delta_v + (-pi[a].ln()) * adv - entropy_beta * entropy;

        // d/dlogit_j of −ln π_a · δ is δ(π_j − 1[j=a]); of −βH it is βπ_j(ln π_j + H).
        let d_logits: Vec<f64> = (0..N_ACTIONS)
            .map(|j| {
                let onehot = if j == a { 1.0 } else { 0.0 };
                adv * (pi[j] - onehot) + entropy_beta * pi[j] * (pi[j].ln() + entropy)
            })
            .collect();
        scratch.clear();
        net.actor.backward(&a_cache, &d_logits, &mut scratch)?;
        for (g, s) in grad_actor.iter_mut().zip(&scratch) {
            *g += s;
        }

        scratch.clear();
        net.critic.backward(&c_cache, &[-2.0 * delta_v], &mut scratch)?;
        for (g, s) in grad_critic.iter_mut().zip(&scratch) {
            *g += s;
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("actor-critic loss"));
    }
    grad_actor.extend_from_slice(&grad_critic);
    Ok((loss, grad_actor))
}
