//! Deterministic long-only daily trading environment.
//!
//! Percentages in observations and rewards are expressed in percentage
//! points: a 0.61% gain is `0.61`.

use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{forecast_window, EnrichedBar, NormalizationSpec};
use crate::qlstm::Forecaster;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub initial_capital: f64,
    /// Cash committed by each buy.
    pub unit_notional: f64,
    pub clip_low: f64,
    pub clip_high: f64,
    pub time_cost: f64,
    pub entry_bonus: f64,
    pub entry_penalty: f64,
    pub exit_profit_base: f64,
    pub exit_profit_scale: f64,
    pub exit_loss_base: f64,
    pub exit_loss_scale: f64,
    pub holding_coef: f64,
    pub invalid_penalty: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            initial_capital: 100_000.0,
            unit_notional: 1_000.0,
            clip_low: -15.0,
            clip_high: 30.0,
            time_cost: 0.02,
            entry_bonus: 0.5,
            entry_penalty: 2.0,
            exit_profit_base: 10.0,
            exit_profit_scale: 50.0,
            exit_loss_base: 2.0,
            exit_loss_scale: 10.0,
            holding_coef: 5.0,
            invalid_penalty: 0.1,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let magnitudes = [
            ("time_cost", self.time_cost),
            ("entry_bonus", self.entry_bonus),
            ("entry_penalty", self.entry_penalty),
            ("exit_profit_base", self.exit_profit_base),
            ("exit_profit_scale", self.exit_profit_scale),
            ("exit_loss_base", self.exit_loss_base),
            ("exit_loss_scale", self.exit_loss_scale),
            ("holding_coef", self.holding_coef),
            ("invalid_penalty", self.invalid_penalty),
        ];
        if let Some((name, v)) = magnitudes.iter().find(|(_, v)| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("env.{name} = {v} must be a finite magnitude ≥ 0")));
        }
        if self.clip_low.partial_cmp(&self.clip_high) != Some(std::cmp::Ordering::Less) {
            return Err(Error::Config(format!(
                "env clip bounds [{}, {}] are not increasing",
                self.clip_low, self.clip_high
            )));
        }
        if !(self.initial_capital > 0.0 && self.unit_notional > 0.0) {
            return Err(Error::Config("initial_capital and unit_notional must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Hold = 0,
    Buy = 1,
    Sell = 2,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Hold, Action::Buy, Action::Sell];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Hold => "hold",
            Action::Buy => "buy",
            Action::Sell => "sell",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub cash: f64,
    /// Base-currency units held (notional / entry price, summed over buys).
    pub units: f64,
    /// Cash spent on the open position.
    pub cost_basis: f64,
    pub lots: u32,
}

impl Portfolio {
    pub fn new(cash: f64) -> Self {
        Self {
            cash,
            units: 0.0,
            cost_basis: 0.0,
            lots: 0,
        }
    }

    pub fn is_flat(&self) -> bool {
        self.lots == 0
    }

    /// Average entry price of the open position (cost basis per unit).
    pub fn avg_cost(&self) -> Option<f64> {
        (!self.is_flat()).then(|| self.cost_basis / self.units)
    }

    pub fn equity(&self, price: f64) -> f64 {
        self.cash + self.units * price
    }

    pub fn unrealized_pnl_pct(&self, price: f64) -> Option<f64> {
        self.avg_cost().map(|avg| 100.0 * (price - avg) / avg)
    }
}

pub const OBS_DIM: usize = 10;

pub const OBS_NAMES: [&str; OBS_DIM] = [
    "p_up",
    "p_down",
    "cash_ratio",
    "holdings_ratio",
    "unrealized_pnl_pct",
    "avg_price_ratio",
    "dev_ma20",
    "dev_ma60",
    "ma5_ma20_gap",
    "rel_vol20",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
    pub fn cash_ratio(&self) -> f64 {
        self.0[2]
    }
    pub fn holdings_ratio(&self) -> f64 {
        self.0[3]
    }
    pub fn unrealized_pnl_pct(&self) -> f64 {
        self.0[4]
    }
}

/// Builds the agent state for `bar` given the portfolio and forecaster output.
pub fn build_observation(
    cfg: &EnvConfig,
    portfolio: &Portfolio,
    bar: &EnrichedBar,
    probs: [f64; 2],
) -> Result<Observation> {
    if !bar.is_usable() {
        return Err(Error::InvalidArgument(format!(
            "bar {} lacks complete indicators",
            bar.date()
        )));
    }
    let price = bar.close();
    let (pnl_pct, avg_ratio) = match portfolio.avg_cost() {
        Some(avg) => (100.0 * (price - avg) / avg, (price - avg) / price),
        None => (0.0, 0.0),
    };
    Ok(Observation([
        probs[0],
        probs[1],
        portfolio.cash / cfg.initial_capital,
        portfolio.units * price / cfg.initial_capital,
        pnl_pct,
        avg_ratio,
        100.0 * (price - bar.ma20) / bar.ma20,
        100.0 * (price - bar.ma60) / bar.ma60,
        bar.ma5 - bar.ma20,
        bar.vol20,
    ]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardContext {
    pub action: Action,
    /// False for a buy without enough cash or a sell with nothing held.
    pub valid: bool,
    /// Close above MA20 on the decision day.
    pub trend_up: bool,
    /// Realized pnl of a valid sell, percentage points.
    pub realized_pnl_pct: Option<f64>,
    /// Unrealized pnl of the open position before acting, percentage points.
    pub unrealized_pnl_pct: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub time_cost: f64,
    pub entry_term: f64,
    pub exit_term: f64,
    pub holding_term: f64,
    pub total_before_clip: f64,
    pub total: f64,
}

pub fn compute_reward(cfg: &EnvConfig, ctx: &RewardContext) -> RewardBreakdown {
    let time_cost = -cfg.time_cost;
    let mut entry_term = 0.0;
    let mut exit_term = 0.0;
    let mut holding_term = 0.0;
    match (ctx.action, ctx.valid) {
        (Action::Hold, _) => {
            if let Some(pnl) = ctx.unrealized_pnl_pct.filter(|p| *p < 0.0) {
                holding_term = -cfg.holding_coef * pnl * pnl;
            }
        }
        (Action::Buy | Action::Sell, false) => entry_term = -cfg.invalid_penalty,
        (Action::Buy, true) => {
            entry_term = if ctx.trend_up {
                cfg.entry_bonus
            } else {
                -cfg.entry_penalty
            }
        }
        (Action::Sell, true) => {
            let pnl = ctx.realized_pnl_pct.unwrap_or(0.0);
            exit_term = if pnl > 0.0 {
                cfg.exit_profit_base + cfg.exit_profit_scale * pnl
            } else {
                -cfg.exit_loss_base - cfg.exit_loss_scale * pnl.abs()
            };
        }
    }
    let total_before_clip = time_cost + entry_term + exit_term + holding_term;
    RewardBreakdown {
        time_cost,
        entry_term,
        exit_term,
        holding_term,
        total_before_clip,
        total: total_before_clip.clamp(cfg.clip_low, cfg.clip_high),
    }
}

/// Usable bars paired with the frozen forecaster's output for each day.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSeries {
    pub bars: Vec<EnrichedBar>,
    pub probs: Vec<[f64; 2]>,
}

impl MarketSeries {
    pub fn new(bars: Vec<EnrichedBar>, probs: Vec<[f64; 2]>) -> Result<Self> {
        if bars.len() != probs.len() {
            return Err(Error::ShapeMismatch {
                context: "series probabilities",
                expected: bars.len(),
                got: probs.len(),
            });
        }
        if let Some(b) = bars.iter().find(|b| !b.is_usable()) {
            return Err(Error::InvalidArgument(format!(
                "bar {} lacks complete indicators",
                b.date()
            )));
        }
        Ok(Self { bars, probs })
    }

    /// Queries the forecaster on the trailing window of every bar. Bars
    /// without a full window get `(0.5, 0.5)`.
    pub fn with_forecaster(
        bars: Vec<EnrichedBar>,
        norm: &NormalizationSpec,
        forecaster: &Forecaster,
    ) -> Result<Self> {
        let probs = (0..bars.len())
            .map(|t| match forecast_window(&bars, norm, t, forecaster.seq_len()) {
                Some(w) => forecaster.predict(&w),
                None => Ok([0.5, 0.5]),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(bars, probs)
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Fill {
    Buy {
        price: f64,
        notional: f64,
        units: f64,
    },
    Sell {
        price: f64,
        units: f64,
        proceeds: f64,
        cost_basis: f64,
        pnl_pct: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub breakdown: RewardBreakdown,
    /// Index of the bar the action executed on.
    pub bar_index: usize,
    pub fill: Option<Fill>,
}

#[derive(Debug, Clone)]
pub struct TradingEnv {
    cfg: EnvConfig,
    series: Arc<MarketSeries>,
    range: Range<usize>,
    t: usize,
    portfolio: Portfolio,
    done: bool,
}

impl TradingEnv {
    /// An environment over `series.bars[range]`. The range must hold at least two bars.
    pub fn new(cfg: EnvConfig, series: Arc<MarketSeries>, range: Range<usize>) -> Result<Self> {
        cfg.validate()?;
        if range.end > series.len() || range.start + 1 >= range.end {
            return Err(Error::InsufficientHistory {
                needed: range.start + 2,
                got: series.len().min(range.end),
            });
        }
        let portfolio = Portfolio::new(cfg.initial_capital);
        Ok(Self {
            t: range.start,
            cfg,
            series,
            range,
            portfolio,
            done: true,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn series(&self) -> &Arc<MarketSeries> {
        &self.series
    }

    pub fn range(&self) -> Range<usize> {
        self.range.clone()
    }

    pub fn portfolio(&self) -> &Portfolio {
        &self.portfolio
    }

    pub fn current_index(&self) -> usize {
        self.t
    }

    pub fn current_bar(&self) -> &EnrichedBar {
        &self.series.bars[self.t]
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn reset(&mut self) -> Result<Observation> {
        self.t = self.range.start;
        self.portfolio = Portfolio::new(self.cfg.initial_capital);
        self.done = false;
        self.observation()
    }

    pub fn observation(&self) -> Result<Observation> {
        build_observation(
            &self.cfg,
            &self.portfolio,
            &self.series.bars[self.t],
            self.series.probs[self.t],
        )
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let bar = self.series.bars[self.t];
        let price = bar.close();
        let unrealized = self.portfolio.unrealized_pnl_pct(price);
        let mut realized = None;
        let mut fill = None;

        let valid = match action {
            Action::Hold => true,
            Action::Buy => {
                if self.portfolio.cash >= self.cfg.unit_notional {
                    let notional = self.cfg.unit_notional;
                    let units = notional / price;
                    self.portfolio.cash -= notional;
                    self.portfolio.units += units;
                    self.portfolio.cost_basis += notional;
                    self.portfolio.lots += 1;
                    fill = Some(Fill::Buy {
                        price,
                        notional,
                        units,
                    });
                    true
                } else {
                    false
                }
            }
            Action::Sell => match self.portfolio.avg_cost() {
                Some(avg) => {
                    let pnl_pct = 100.0 * (price - avg) / avg;
                    let units = self.portfolio.units;
                    let proceeds = units * price;
                    fill = Some(Fill::Sell {
                        price,
                        units,
                        proceeds,
                        cost_basis: self.portfolio.cost_basis,
                        pnl_pct,
                    });
                    self.portfolio = Portfolio::new(self.portfolio.cash + proceeds);
                    realized = Some(pnl_pct);
                    true
                }
                None => false,
            },
        };

        let breakdown = compute_reward(
            &self.cfg,
            &RewardContext {
                action,
                valid,
                trend_up: price > bar.ma20,
                realized_pnl_pct: realized,
                unrealized_pnl_pct: unrealized,
            },
        );

        let bar_index = self.t;
        self.t += 1;
        let equity = self.portfolio.equity(self.series.bars[self.t].close());
        self.done = self.t + 1 >= self.range.end || equity <= 0.0;
        Ok(StepResult {
            observation: self.observation()?,
            reward: breakdown.total,
            done: self.done,
            breakdown,
            bar_index,
            fill,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{compute_indicators, usable_bars, Quote};
    use chrono::NaiveDate;

    const TOL: f64 = 1e-9;

    fn series_from_closes(closes: &[f64]) -> Arc<MarketSeries> {
        let start = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
        let quotes: Vec<Quote> = closes
            .iter()
            .enumerate()
            .map(|(i, &c)| Quote {
                date: start + chrono::Duration::days(i as i64),
                open: c,
                high: c,
                low: c,
                close: c,
            })
            .collect();
        let bars = usable_bars(compute_indicators(&quotes).unwrap());
        let n = bars.len();
        Arc::new(MarketSeries::new(bars, vec![[0.6, 0.4]; n]).unwrap())
    }

    fn rising(n: usize) -> Arc<MarketSeries> {
        series_from_closes(&(0..n).map(|i| 30.0 + 0.01 * i as f64).collect::<Vec<_>>())
    }

    fn ctx(action: Action) -> RewardContext {
        RewardContext {
            action,
            valid: true,
            trend_up: true,
            realized_pnl_pct: None,
            unrealized_pnl_pct: None,
        }
    }

    #[test]
    fn reward_table() {
        let cfg = EnvConfig::default();
        let r = compute_reward(&cfg, &ctx(Action::Hold));
        assert!((r.total + 0.02).abs() < TOL);

        let r = compute_reward(&cfg, &ctx(Action::Buy));
        assert!((r.total - 0.48).abs() < TOL);

        let counter = RewardContext { trend_up: false, ..ctx(Action::Buy) };
        assert!((compute_reward(&cfg, &counter).total + 2.02).abs() < TOL);

        let sell = |pnl| RewardContext { realized_pnl_pct: Some(pnl), ..ctx(Action::Sell) };
        assert!((compute_reward(&cfg, &sell(0.2)).total - 19.98).abs() < TOL);
        let best = compute_reward(&cfg, &sell(0.61));
        assert!((best.total_before_clip - 40.48).abs() < TOL);
        assert_eq!(best.total, 30.0);
        assert!((compute_reward(&cfg, &sell(-0.88)).total + 10.82).abs() < TOL);

        let losing_hold = RewardContext { unrealized_pnl_pct: Some(-0.5), ..ctx(Action::Hold) };
        let r = compute_reward(&cfg, &losing_hold);
        assert!((r.holding_term + 1.25).abs() < TOL);
        assert!((r.total + 1.27).abs() < TOL);

        let winning_hold = RewardContext { unrealized_pnl_pct: Some(0.3), ..ctx(Action::Hold) };
        assert_eq!(compute_reward(&cfg, &winning_hold).holding_term, 0.0);

        let invalid = RewardContext { valid: false, ..ctx(Action::Sell) };
        let r = compute_reward(&cfg, &invalid);
        assert!((r.entry_term + 0.1).abs() < TOL && r.exit_term == 0.0);

        let deep = RewardContext { realized_pnl_pct: Some(-3.0), ..ctx(Action::Sell) };
        let r = compute_reward(&cfg, &deep);
        assert!((r.total_before_clip + 32.02).abs() < TOL);
        assert_eq!(r.total, -15.0);
    }

    #[test]
    fn observation_examples() {
        let cfg = EnvConfig::default();
        let series = rising(80);
        let mut bar = series.bars[0];
        bar.quote.close = 31.0;
        bar.ma20 = 31.0;
        let obs = build_observation(&cfg, &Portfolio::new(1e5), &bar, [0.5, 0.5]).unwrap();
        assert_eq!(obs.0[6], 0.0);

        let mut p = Portfolio::new(99_000.0);
        p.units = 1000.0 / 30.0;
        p.cost_basis = 1000.0;
        p.lots = 1;
        bar.quote.close = 33.0;
        let obs = build_observation(&cfg, &p, &bar, [0.5, 0.5]).unwrap();
        assert!((obs.unrealized_pnl_pct() - 10.0).abs() < TOL);
    }

    #[test]
    fn observation_full_vector() {
        // Hand-computed: cash 98,000, two lots bought at 30 and 32, priced at 33.
        let cfg = EnvConfig::default();
        let mut bar = rising(80).bars[0];
        bar.quote.close = 33.0;
        bar.ma5 = 32.5;
        bar.ma20 = 32.0;
        bar.ma60 = 30.0;
        bar.vol20 = 0.02;
        let units = 1000.0 / 30.0 + 1000.0 / 32.0;
        let p = Portfolio { cash: 98_000.0, units, cost_basis: 2000.0, lots: 2 };
        let avg = 2000.0 / units; // 30.967741935483872
        let obs = build_observation(&cfg, &p, &bar, [0.7, 0.3]).unwrap();
        let expected = [
            0.7,
            0.3,
            0.98,
            units * 33.0 / 100_000.0,
            100.0 * (33.0 - avg) / avg,
            (33.0 - avg) / 33.0,
            100.0 * 1.0 / 32.0,
            10.0,
            0.5,
            0.02,
        ];
        assert!((avg - 30.967741935483872).abs() < 1e-12);
        assert!((expected[4] - 6.5625).abs() < 1e-9);
        for (a, b) in obs.0.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn reset_and_step_basics() {
        let series = rising(100);
        let n = series.len();
        let mut env = TradingEnv::new(EnvConfig::default(), series, 0..n).unwrap();
        let obs = env.reset().unwrap();
        assert_eq!(obs.cash_ratio(), 1.0);
        assert_eq!(obs.holdings_ratio(), 0.0);
        assert_eq!(obs.unrealized_pnl_pct(), 0.0);
        assert_eq!(obs, env.reset().unwrap());

        let r = env.step(Action::Hold).unwrap();
        assert!((r.reward + 0.02).abs() < TOL);
        let r = env.step(Action::Buy).unwrap();
        assert!((r.reward - 0.48).abs() < TOL, "{r:?}");
        let r = env.step(Action::Sell).unwrap();
        assert!(r.breakdown.exit_term > 10.0);
        assert!(env.portfolio().is_flat());
        let before = *env.portfolio();
        let r = env.step(Action::Sell).unwrap();
        assert!((r.breakdown.entry_term + 0.1).abs() < TOL);
        assert_eq!(*env.portfolio(), before);
    }

    #[test]
    fn insufficient_cash_is_invalid() {
        let series = rising(100);
        let cfg = EnvConfig { initial_capital: 1500.0, ..EnvConfig::default() };
        let mut env = TradingEnv::new(cfg, series, 0..20).unwrap();
        env.reset().unwrap();
        env.step(Action::Buy).unwrap();
        let r = env.step(Action::Buy).unwrap();
        assert!(r.fill.is_none());
        assert!((r.breakdown.entry_term + 0.1).abs() < TOL);
        assert_eq!(env.portfolio().lots, 1);
    }

    #[test]
    fn episode_ends_and_rejects_further_steps() {
        let series = rising(100);
        let mut env = TradingEnv::new(EnvConfig::default(), series, 5..9).unwrap();
        assert!(matches!(env.step(Action::Hold), Err(Error::EpisodeDone)));
        env.reset().unwrap();
        let mut steps = 0;
        loop {
            steps += 1;
            if env.step(Action::Hold).unwrap().done {
                break;
            }
        }
        assert_eq!(steps, 3);
        assert!(matches!(env.step(Action::Hold), Err(Error::EpisodeDone)));
        assert!(TradingEnv::new(EnvConfig::default(), rising(100), 5..6).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = EnvConfig { clip_low: 5.0, clip_high: 5.0, ..EnvConfig::default() };
        assert!(bad.validate().is_err());
        let bad = EnvConfig { holding_coef: -1.0, ..EnvConfig::default() };
        assert!(bad.validate().is_err());
        assert!(EnvConfig::default().validate().is_ok());
    }
}
