//! Built-in oracle suites run by the `selftest` command.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backtest::{compute_metrics, EquityPoint, TradeRecord};
use crate::env::{compute_reward, Action, EnvConfig, Observation, RewardContext};
use crate::nn::weighted_cross_entropy;
use crate::oracle::{brute_force_max_drawdown, central_gradient, dense_vqc_expectations, discounted_returns};
use crate::qa3c::{loss_and_grads, n_step_returns, ActorCritic, NetConfig, RolloutBuffer, Transition};
use crate::qlstm::{QlstmConfig, QlstmParams};
use crate::market_data::Direction;
use crate::quantum::{vqc_forward, vqc_gradient, StateVector, VqcSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: usize,
    pub total: usize,
    /// First few failure descriptions.
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            passed: 0,
            total: 0,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.total += 1;
        if ok {
            self.passed += 1;
        } else if self.failures.len() < 5 {
            self.failures.push(what());
        }
    }

    pub fn ok(&self) -> bool {
        self.passed == self.total
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

pub fn quantum_suite(seed: u64) -> SuiteReport {
    let mut r = SuiteReport::new("quantum");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut sv = StateVector::new(5).expect("5 qubits");
    for g in 0..2000 {
        if rng.random_bool(0.5) {
            let q = rng.random_range(0..5);
            sv.apply_ry(q, rng.random_range(-10.0..10.0)).expect("valid qubit");
        } else {
            let c = rng.random_range(0..5);
            let t = (c + rng.random_range(1..5)) % 5;
            sv.apply_cnot(c, t).expect("distinct qubits");
        }
        let n = sv.norm_sqr();
        r.check(close(n, 1.0, 1e-10), || format!("norm {n} after gate {g}"));
    }

    for k in 0..100 {
        let theta = -std::f64::consts::PI + k as f64 * 0.0634;
        let mut s = StateVector::new(1).expect("1 qubit");
        s.apply_ry(0, theta).expect("qubit 0");
        let z = s.expect_z(0).expect("qubit 0");
        r.check(close(z, theta.cos(), 1e-12), || format!("R_y({theta}) gives {z}"));
    }

    for i in 0..20 {
        let spec = VqcSpec::new(4, 4, 2).expect("valid spec");
        let params: Vec<f64> = (0..spec.param_count()).map(|_| rng.random_range(0.0..6.3)).collect();
        let inputs: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..1.5)).collect();
        let fast = vqc_forward(&spec, &params, &inputs).expect("shapes");
        let dense = dense_vqc_expectations(&spec, &params, &inputs);
        let ok = fast.iter().zip(&dense).all(|(a, b)| close(*a, *b, 1e-10));
        r.check(ok, || format!("vqc instance {i}: {fast:?} vs {dense:?}"));
    }
    r
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn gradient_suite(seed: u64) -> SuiteReport {
    let mut r = SuiteReport::new("gradients");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for i in 0..10 {
        let spec = VqcSpec::new(4, 3, 2).expect("valid spec");
        let params: Vec<f64> = (0..spec.param_count()).map(|_| rng.random_range(0.0..6.3)).collect();
        let inputs: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
        let up: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = vqc_gradient(&spec, &params, &inputs, &up).expect("shapes");
        let f = |p: &[f64], x: &[f64]| -> f64 {
            vqc_forward(&spec, p, x)
                .expect("shapes")
                .iter()
                .zip(&up)
                .map(|(a, b)| a * b)
                .sum()
        };
        let fd_p = central_gradient(|p| f(p, &inputs), &params, 1e-5);
        let fd_x = central_gradient(|x| f(&params, x), &inputs, 1e-5);
        let err = max_abs_diff(&g.params, &fd_p).max(max_abs_diff(&g.inputs, &fd_x));
        r.check(err < 1e-6, || format!("vqc instance {i}: max error {err:e}"));
    }

    let cfg = QlstmConfig::default();
    for i in 0..3 {
        let p = QlstmParams::init(&cfg, &mut rng).expect("valid config");
        let window: Vec<Vec<f64>> = (0..cfg.seq_len)
            .map(|_| (0..cfg.input_dim).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let label = if rng.random_bool(0.5) { Direction::Up } else { Direction::Down };
        let weights = [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)];
        let (_, grad) = p.loss_and_grad(&window, label, &weights).expect("shapes");
        let fd = central_gradient(
            |x| {
                let mut q = p.clone();
                q.load_flat(x).expect("length");
                let probs = q.sequence_forward(&window).expect("shapes");
                weighted_cross_entropy(&probs, label.index(), &weights).expect("label").0
            },
            &p.to_flat(),
            1e-5,
        );
        let err = max_abs_diff(&grad, &fd);
        r.check(err < 1e-5, || format!("qlstm instance {i}: max error {err:e}"));
    }

    for i in 0..3 {
        let net = ActorCritic::init(NetConfig::default(), seed + i).expect("default net");
        let (buffer, returns, advantages) = random_rollout(&mut rng, 6);
        let beta = 0.05;
        let (_, grad) = loss_and_grads(&net, &buffer, &returns, &advantages, beta).expect("shapes");
        let fd = central_gradient(
            |x| {
                let mut q = net.clone();
                q.load_flat(x).expect("length");
                loss_and_grads(&q, &buffer, &returns, &advantages, beta).expect("shapes").0
            },
            &net.to_flat(),
            1e-5,
        );
        let err = max_abs_diff(&grad, &fd);
        r.check(err < 1e-5, || format!("actor-critic instance {i}: max error {err:e}"));
    }
    r
}

/// Random states, actions, returns and (frozen) advantages.
pub fn random_rollout<R: Rng>(rng: &mut R, len: usize) -> (RolloutBuffer, Vec<f64>, Vec<f64>) {
    let mut buffer = RolloutBuffer::new(len);
    for _ in 0..len {
        let mut s = [0.0; 10];
        for v in s.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        buffer.push(Transition {
            state: Observation(s),
            action: Action::ALL[rng.random_range(0..3)],
            reward: rng.random_range(-15.0..30.0),
        });
    }
    let returns = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
    let advantages = (0..len).map(|_| rng.random_range(-3.0..3.0)).collect();
    (buffer, returns, advantages)
}

fn reward_ctx(action: Action, valid: bool, trend_up: bool, realized: Option<f64>, unrealized: Option<f64>) -> RewardContext {
    RewardContext {
        action,
        valid,
        trend_up,
        realized_pnl_pct: realized,
        unrealized_pnl_pct: unrealized,
    }
}

pub fn reward_suite(seed: u64) -> SuiteReport {
    let mut r = SuiteReport::new("reward");
    let cfg = EnvConfig::default();
    let table = [
        ("flat hold", reward_ctx(Action::Hold, true, true, None, None), -0.02),
        ("trend-aligned buy", reward_ctx(Action::Buy, true, true, None, None), 0.48),
        ("counter-trend buy", reward_ctx(Action::Buy, true, false, None, None), -2.02),
        ("profitable sell 0.2", reward_ctx(Action::Sell, true, true, Some(0.2), Some(0.2)), 19.98),
        ("profitable sell 0.61", reward_ctx(Action::Sell, true, true, Some(0.61), Some(0.61)), 30.0),
        ("losing sell -0.88", reward_ctx(Action::Sell, true, false, Some(-0.88), Some(-0.88)), -10.82),
        ("losing hold -0.5", reward_ctx(Action::Hold, true, false, None, Some(-0.5)), -1.27),
        ("invalid sell", reward_ctx(Action::Sell, false, true, None, None), -0.12),
    ];
    for (name, ctx, want) in table {
        let got = compute_reward(&cfg, &ctx).total;
        r.check(close(got, want, 1e-9), || format!("{name}: {got} vs {want}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_bounds = true;
    let mut decomposes = true;
    for _ in 0..100_000 {
        let action = Action::ALL[rng.random_range(0..3)];
        let pnl = rng.random_range(-20.0..20.0);
        let ctx = reward_ctx(action, rng.random_bool(0.8), rng.random_bool(0.5), Some(pnl), Some(pnl));
        let b = compute_reward(&cfg, &ctx);
        in_bounds &= (cfg.clip_low..=cfg.clip_high).contains(&b.total);
        decomposes &= b.total_before_clip == b.time_cost + b.entry_term + b.exit_term + b.holding_term
            && b.total == b.total_before_clip.clamp(cfg.clip_low, cfg.clip_high);
    }
    r.check(in_bounds, || "random contexts escaped the clip range".into());
    r.check(decomposes, || "reward components do not sum to the total".into());
    r
}

pub fn returns_suite(seed: u64) -> SuiteReport {
    let mut r = SuiteReport::new("n-step returns");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..200 {
        let len = rng.random_range(1..=30);
        let rewards: Vec<f64> = (0..len).map(|_| rng.random_range(-15.0..30.0)).collect();
        let values: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
        let bootstrap = if i % 2 == 0 { 0.0 } else { rng.random_range(-10.0..10.0) };
        let (ret, adv) = n_step_returns(&rewards, &values, 0.995, bootstrap).expect("non-empty");
        let oracle = discounted_returns(&rewards, 0.995, bootstrap);
        let ok = ret.iter().zip(&oracle).all(|(a, b)| close(*a, *b, 1e-12))
            && adv.iter().zip(ret.iter().zip(&values)).all(|(d, (rv, v))| *d == rv - v);
        r.check(ok, || format!("buffer {i} of length {len}"));
    }
    r
}

pub fn metrics_suite() -> SuiteReport {
    let mut r = SuiteReport::new("metrics");
    let day = |d: u32| NaiveDate::from_ymd_opt(2021, 6, d).expect("valid day");
    let curve = |v: &[f64]| -> Vec<EquityPoint> {
        v.iter()
            .enumerate()
            .map(|(i, &equity)| EquityPoint { date: day(i as u32 + 1), equity })
            .collect()
    };
    let trade = |pnl_pct: f64| TradeRecord {
        entry_dates: vec![day(1)],
        exit_date: day(2),
        avg_entry: 1.0,
        exit_price: 1.0 + pnl_pct / 100.0,
        notional: 1000.0,
        pnl_pct,
        pnl_cash: 10.0 * pnl_pct,
    };

    let m = compute_metrics(&[], &curve(&[100.0, 110.0, 99.0, 120.0])).expect("non-empty");
    r.check(close(m.max_drawdown_pct, 10.0, 1e-12), || format!("drawdown {}", m.max_drawdown_pct));
    r.check(m.win_rate_pct.is_none(), || "zero-trade win rate should be absent".into());

    let trades: Vec<_> = [0.5, -0.2, 0.1].into_iter().map(trade).collect();
    let m = compute_metrics(&trades, &curve(&[100.0, 111.87])).expect("non-empty");
    r.check(close(m.win_rate_pct.unwrap_or(f64::NAN), 200.0 / 3.0, 1e-12), || format!("win rate {:?}", m.win_rate_pct));
    r.check(m.best_trade_pct == Some(0.5) && m.worst_trade_pct == Some(-0.2), || "best/worst".into());
    r.check(close(m.total_return_pct, 11.87, 1e-9), || format!("total return {}", m.total_return_pct));

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..50 {
        let v: Vec<f64> = (0..20).map(|_| rng.random_range(50.0..150.0)).collect();
        let m = compute_metrics(&[], &curve(&v)).expect("non-empty");
        let want = brute_force_max_drawdown(&v);
        r.check(close(m.max_drawdown_pct, want, 1e-9), || format!("curve {i}: {} vs {want}", m.max_drawdown_pct));
    }
    r
}

pub fn parameter_suite() -> SuiteReport {
    let mut r = SuiteReport::new("parameter count");
    let net = ActorCritic::init(NetConfig::default(), 0).expect("default net");
    let c = net.count_params();
    r.check(c.quantum == 32, || format!("quantum {}", c.quantum));
    r.check(c.classical == 212, || format!("classical {}", c.classical));
    r.check(c.total() == 244, || format!("total {}", c.total()));
    let q = QlstmParams::zeros(&QlstmConfig::default()).expect("default qlstm");
    r.check(q.to_flat().len() == q.param_count().total(), || "qlstm flat length".into());
    r
}

pub fn run_all(seed: u64) -> Vec<SuiteReport> {
    vec![
        parameter_suite(),
        quantum_suite(seed),
        gradient_suite(seed),
        reward_suite(seed),
        returns_suite(seed),
        metrics_suite(),
    ]
}
