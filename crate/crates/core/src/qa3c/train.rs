use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::TradingEnv;
use crate::error::{Error, Result};

use super::network::ActorCritic;
use super::rollout::{loss_and_grads, n_step_returns, sample_action, RolloutBuffer, Transition};
use super::shared::SharedParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub workers: usize,
    pub rollout_len: usize,
    pub gamma: f64,
    pub entropy_beta: f64,
    pub lr: f64,
    pub max_episodes: usize,
    /// Action-sampling seed; run configs supply it from their seed table.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            workers: 8,
            rollout_len: 30,
            gamma: 0.995,
            entropy_beta: 0.05,
            lr: 1e-5,
            max_episodes: 2000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("agent.workers must be ≥ 1".into()));
        }
        if self.rollout_len == 0 {
            return Err(Error::Config("agent.rollout_len must be ≥ 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("agent.gamma {} must lie in (0, 1)", self.gamma)));
        }
        if !(self.entropy_beta >= 0.0 && self.lr >= 0.0) {
            return Err(Error::Config("agent.entropy_beta and agent.lr must be ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub worker: usize,
    pub total_reward: f64,
    pub steps: usize,
    pub version: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: ActorCritic,
    /// Sorted by episode index.
    pub log: Vec<EpisodeLog>,
    pub version: u64,
    /// Pushes the workers saw accepted, counted on the worker side.
    pub accepted_updates: u64,
    pub skipped_updates: u64,
    /// Set when a worker panicked; `net` then holds the partial global parameters.
    pub aborted: Option<(usize, String)>,
}

fn worker_seed(seed: u64, worker: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(worker as u64 + 1)
}

/// State shared by every worker of one training run.
struct Coordination<'a> {
    shared: &'a SharedParams,
    next_episode: &'a AtomicUsize,
    accepted: &'a AtomicU64,
    abort: &'a AtomicBool,
}

/// Runs one worker until the shared episode budget is exhausted.
fn run_worker(
    worker: usize,
    cfg: &TrainConfig,
    template: &ActorCritic,
    env: &mut TradingEnv,
    co: &Coordination<'_>,
    log: &mpsc::Sender<EpisodeLog>,
) -> Result<()> {
    let Coordination {
        shared,
        next_episode,
        accepted,
        abort,
    } = *co;
    let mut rng = ChaCha8Rng::seed_from_u64(worker_seed(cfg.seed, worker));
    let mut local = template.clone();
    let (mut flat, _) = shared.snapshot();
    local.load_flat(&flat)?;
    let mut buffer = RolloutBuffer::new(cfg.rollout_len);

    while !abort.load(Ordering::Acquire) {
        let episode = next_episode.fetch_add(1, Ordering::AcqRel);
        if episode >= cfg.max_episodes {
            break;
        }
        let mut obs = env.reset()?;
        let mut total_reward = 0.0;
        let mut steps = 0;
        let mut version = shared.version();
        loop {
            buffer.clear();
            while !buffer.is_full() {
                let pi = local.policy(obs.as_slice())?;
                let action = sample_action(&pi, &mut rng)?;
                let step = env.step(action)?;
                buffer.push(Transition {
                    state: obs,
                    action,
                    reward: step.reward,
                });
                total_reward += step.reward;
                steps += 1;
                obs = step.observation;
                if step.done {
                    buffer.terminal = true;
                    break;
                }
            }
            buffer.next_state = Some(obs);
            let bootstrap = if buffer.terminal {
                0.0
            } else {
                local.value(obs.as_slice())?
            };
            let values = buffer
                .transitions
                .iter()
                .map(|t| local.value(t.state.as_slice()))
                .collect::<Result<Vec<_>>>()?;
            let (returns, advantages) =
                n_step_returns(&buffer.rewards(), &values, cfg.gamma, bootstrap)?;
            match loss_and_grads(&local, &buffer, &returns, &advantages, cfg.entropy_beta) {
                Ok((_, grad)) => {
                    if let Some(v) = shared.push_pull(&grad, &mut flat)? {
                        accepted.fetch_add(1, Ordering::AcqRel);
                        version = v;
                    }
                }
                // A non-finite loss aborts this update only; pull the latest parameters.
                Err(Error::NonFinite(_)) => flat = shared.snapshot().0,
                Err(e) => return Err(e),
            }
            local.load_flat(&flat)?;
            if buffer.terminal {
                break;
            }
        }
        // The receiver outlives every worker.
        let _ = log.send(EpisodeLog {
            episode,
            worker,
            total_reward,
            steps,
            version,
        });
    }
    Ok(())
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

/// Asynchronous advantage actor-critic training. `make_env(worker)` builds
/// each worker's private environment inside that worker's thread.
pub fn train_async<F>(cfg: &TrainConfig, init: ActorCritic, make_env: F) -> Result<TrainOutcome>
where
    F: Fn(usize) -> Result<TradingEnv> + Sync,
{
    cfg.validate()?;
    let shared = SharedParams::new(init.to_flat(), cfg.lr);
    let next_episode = AtomicUsize::new(0);
    let accepted = AtomicU64::new(0);
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel();

    let results: Vec<std::thread::Result<Result<()>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.workers)
            .map(|w| {
                let tx = tx.clone();
                let co = Coordination {
                    shared: &shared,
                    next_episode: &next_episode,
                    accepted: &accepted,
                    abort: &abort,
                };
                let (abort, init, make_env) = (&abort, &init, &make_env);
                scope.spawn(move || {
                    let outcome = catch_unwind(AssertUnwindSafe(|| {
                        let mut env = make_env(w)?;
                        run_worker(w, cfg, init, &mut env, &co, &tx)
                    }));
                    if !matches!(outcome, Ok(Ok(()))) {
                        abort.store(true, Ordering::Release);
                    }
                    outcome
                })
            })
            .collect();
        drop(tx);
        handles
            .into_iter()
            .map(|h| h.join().and_then(|r| r))
            .collect()
    });

    let mut log: Vec<EpisodeLog> = rx.into_iter().collect();
    log.sort_by_key(|e| e.episode);

    let mut aborted = None;
    for (w, r) in results.into_iter().enumerate() {
        match r {
            Ok(Ok(())) => {}
            Ok(Err(e)) => return Err(e),
            Err(payload) => {
                aborted.get_or_insert((w, panic_message(payload)));
            }
        }
    }

    let version = shared.version();
    let skipped_updates = shared.skipped();
    let mut net = init;
    net.load_flat(&shared.into_params())?;
    Ok(TrainOutcome {
        net,
        log,
        version,
        accepted_updates: accepted.into_inner(),
        skipped_updates,
        aborted,
    })
}

/// Mean total reward of the episodes with index in `range`.
pub fn mean_episode_reward(log: &[EpisodeLog], range: std::ops::Range<usize>) -> Option<f64> {
    let picked: Vec<f64> = log
        .iter()
        .filter(|e| range.contains(&e.episode))
        .map(|e| e.total_reward)
        .collect();
    (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
}

pub fn write_training_log<W: std::io::Write>(writer: W, log: &[EpisodeLog]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["episode", "worker", "total_reward", "steps", "version"])?;
    for e in log {
        w.write_record([
            e.episode.to_string(),
            e.worker.to_string(),
            e.total_reward.to_string(),
            e.steps.to_string(),
            e.version.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<training log>", e))?;
    Ok(())
}
