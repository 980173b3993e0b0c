//! Pipeline stages. Each stage reads its inputs from the output directory,
//! writes its own artifacts there, and echoes the resolved configuration.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backtest::{
    self, compute_metrics, export_report, read_benchmarks, run_backtest, BacktestRun, GreedyPolicy,
    Metrics, Policy, RandomPolicy,
};
use crate::checkpoint::Checkpoint;
use crate::config::{RunConfig, RESOLVED_CONFIG_FILE};
use crate::env::{EnvConfig, MarketSeries, TradingEnv};
use crate::error::{Error, Result};
use crate::market_data::{
    build_forecast_dataset, compute_indicators, load_quotes, temporal_split, usable_bars,
    write_feature_dump, write_quotes, EnrichedBar, NormalizationSpec, Quote,
};
use crate::qa3c::{mean_episode_reward, train_async, write_training_log, ActorCritic, TrainOutcome};
use crate::qlstm::{train_qlstm, write_epoch_csv, Forecaster, QlstmParams};
use crate::synthetic;

pub const DATASET_FILE: &str = "dataset.json";
pub const FEATURES_FILE: &str = "features.csv";
pub const QLSTM_CKPT: &str = "qlstm.ckpt";
pub const QLSTM_METRICS: &str = "qlstm_metrics.csv";
pub const AGENT_CKPT: &str = "agent.ckpt";
pub const AGENT_PARTIAL_CKPT: &str = "agent.partial.ckpt";
pub const TRAINING_LOG: &str = "training_log.csv";

/// Cleaned, enriched and split market data shared by every later stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedData {
    pub source: String,
    pub raw_quotes: usize,
    /// Usable bars only (complete indicators).
    pub bars: Vec<EnrichedBar>,
    pub train_len: usize,
    pub norm: NormalizationSpec,
}

impl PreparedData {
    pub fn test_range(&self) -> std::ops::Range<usize> {
        self.train_len..self.bars.len()
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn require(dir: &Path, name: &str, stage: &'static str) -> Result<PathBuf> {
    let path = dir.join(name);
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact { path, stage })
    }
}

/// Creates the output directory and writes the resolved config into it.
pub fn prepare_out_dir(cfg: &RunConfig) -> Result<()> {
    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(RESOLVED_CONFIG_FILE);
    fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))
}

pub fn load_source(cfg: &RunConfig) -> Result<(Vec<Quote>, String)> {
    match &cfg.data {
        Some(p) => Ok((load_quotes(p)?, p.display().to_string())),
        None => Ok((
            synthetic::generate(&cfg.synthetic),
            format!("synthetic(seed={})", cfg.synthetic.seed),
        )),
    }
}

pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData> {
    let (quotes, source) = load_source(cfg)?;
    let bars = usable_bars(compute_indicators(&quotes)?);
    let (train, test) = temporal_split(&bars, cfg.train_fraction)?;
    if train.len() < cfg.qlstm.seq_len + cfg.label.horizon || test.len() < 2 {
        return Err(Error::InsufficientHistory {
            needed: crate::market_data::WARMUP + cfg.qlstm.seq_len + cfg.label.horizon + 2,
            got: quotes.len(),
        });
    }
    let norm = NormalizationSpec::fit_forecast(train)?;
    let train_len = train.len();
    Ok(PreparedData {
        source,
        raw_quotes: quotes.len(),
        bars,
        train_len,
        norm,
    })
}

pub fn load_prepared(dir: &Path) -> Result<PreparedData> {
    let path = require(dir, DATASET_FILE, "preprocess")?;
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn preprocess(cfg: &RunConfig) -> Result<PreparedData> {
    prepare_out_dir(cfg)?;
    let data = prepare_data(cfg)?;
    let path = cfg.out_dir.join(DATASET_FILE);
    fs::write(&path, serde_json::to_string(&data)?).map_err(|e| Error::io(&path, e))?;
    if cfg.dump_features {
        write_feature_dump(
            create(&cfg.out_dir.join(FEATURES_FILE))?,
            &data.bars,
            &data.norm,
            data.train_len,
            &cfg.label,
        )?;
    }
    Ok(data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QlstmSummary {
    pub train_samples: usize,
    pub test_samples: usize,
    pub final_train_acc: f64,
    pub final_test_acc: Option<f64>,
}

pub fn train_qlstm_stage(cfg: &RunConfig) -> Result<QlstmSummary> {
    prepare_out_dir(cfg)?;
    let data = load_prepared(&cfg.out_dir)?;
    let train = build_forecast_dataset(&data.bars, &data.norm, &cfg.label, 0..data.train_len);
    let test = build_forecast_dataset(&data.bars, &data.norm, &cfg.label, data.test_range());
    let trained = train_qlstm(&train, &test, &cfg.qlstm, cfg.seeds.init, cfg.seeds.shuffle)?;
    trained
        .params
        .to_checkpoint(&cfg.qlstm, vec![cfg.seeds.init, cfg.seeds.shuffle])
        .save(cfg.out_dir.join(QLSTM_CKPT))?;
    write_epoch_csv(create(&cfg.out_dir.join(QLSTM_METRICS))?, &trained.history)?;
    let last = trained.history.last();
    Ok(QlstmSummary {
        train_samples: train.len(),
        test_samples: test.len(),
        final_train_acc: last.map_or(0.0, |m| m.train_acc),
        final_test_acc: last.and_then(|m| m.test_acc),
    })
}

pub fn load_forecaster(dir: &Path) -> Result<Forecaster> {
    let path = require(dir, QLSTM_CKPT, "train-qlstm")?;
    let (params, _) = QlstmParams::from_checkpoint(&Checkpoint::load(path)?)?;
    Ok(Forecaster::new(params))
}

pub fn load_agent(dir: &Path) -> Result<ActorCritic> {
    let path = require(dir, AGENT_CKPT, "train-agent")?;
    ActorCritic::from_checkpoint(&Checkpoint::load(path)?)
}

/// All bars with forecaster probabilities attached.
pub fn market_series(data: &PreparedData, forecaster: &Forecaster) -> Result<Arc<MarketSeries>> {
    Ok(Arc::new(MarketSeries::with_forecaster(
        data.bars.clone(),
        &data.norm,
        forecaster,
    )?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSummary {
    pub episodes: usize,
    pub version: u64,
    pub skipped_updates: u64,
    pub first_mean_reward: Option<f64>,
    pub last_mean_reward: Option<f64>,
}

fn summarize(outcome: &TrainOutcome) -> AgentSummary {
    let n = outcome.log.len();
    let w = n.min(100);
    AgentSummary {
        episodes: n,
        version: outcome.version,
        skipped_updates: outcome.skipped_updates,
        first_mean_reward: mean_episode_reward(&outcome.log, 0..w),
        last_mean_reward: mean_episode_reward(&outcome.log, n - w..n),
    }
}

pub fn train_agent_stage(cfg: &RunConfig) -> Result<AgentSummary> {
    prepare_out_dir(cfg)?;
    let forecaster = load_forecaster(&cfg.out_dir)?;
    let data = load_prepared(&cfg.out_dir)?;
    let series = market_series(&data, &forecaster)?;
    let env_cfg = cfg.env.clone();
    let train_len = data.train_len;
    let init = ActorCritic::init(cfg.network, cfg.seeds.init)?;
    let outcome = train_async(&cfg.agent_train(), init, |_| {
        TradingEnv::new(env_cfg.clone(), Arc::clone(&series), 0..train_len)
    })?;
    let seeds = vec![cfg.seeds.init, cfg.seeds.sampling];
    write_training_log(create(&cfg.out_dir.join(TRAINING_LOG))?, &outcome.log)?;
    if let Some((worker, message)) = &outcome.aborted {
        outcome
            .net
            .to_checkpoint(seeds)
            .save(cfg.out_dir.join(AGENT_PARTIAL_CKPT))?;
        return Err(Error::WorkerPanicked {
            worker: *worker,
            message: message.clone(),
        });
    }
    outcome.net.to_checkpoint(seeds).save(cfg.out_dir.join(AGENT_CKPT))?;
    Ok(summarize(&outcome))
}

/// Rolls `policy` over the test window of `data`.
pub fn backtest_policy(
    data: &PreparedData,
    series: Arc<MarketSeries>,
    env_cfg: &EnvConfig,
    policy: &mut dyn Policy,
    trace: bool,
) -> Result<BacktestRun> {
    let range = data.test_range();
    if range.len() < 2 {
        return Err(Error::EmptyInput("test range"));
    }
    let mut env = TradingEnv::new(env_cfg.clone(), series, range)?;
    run_backtest(&mut env, policy, trace)
}

/// Greedy evaluation of stored agent and forecaster checkpoints.
pub fn backtest_checkpoints(
    agent: &Checkpoint,
    qlstm: &Checkpoint,
    data: &PreparedData,
    env_cfg: &EnvConfig,
    trace: bool,
) -> Result<BacktestRun> {
    let net = ActorCritic::from_checkpoint(agent)?;
    let (params, _) = QlstmParams::from_checkpoint(qlstm)?;
    let series = market_series(data, &Forecaster::new(params))?;
    backtest_policy(data, series, env_cfg, &mut GreedyPolicy::new(&net), trace)
}

/// Mean total return of `runs` uniformly random policies seeded `seed..seed+runs`.
pub fn random_baseline_return(
    data: &PreparedData,
    series: &Arc<MarketSeries>,
    env_cfg: &EnvConfig,
    runs: usize,
    seed: u64,
) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..runs {
        let run = backtest_policy(
            data,
            Arc::clone(series),
            env_cfg,
            &mut RandomPolicy::new(seed + i as u64),
            false,
        )?;
        total += compute_metrics(&run.trades, &run.equity)?.total_return_pct;
    }
    Ok(total / runs.max(1) as f64)
}

pub fn backtest_stage(cfg: &RunConfig) -> Result<Metrics> {
    prepare_out_dir(cfg)?;
    let agent = Checkpoint::load(require(&cfg.out_dir, AGENT_CKPT, "train-agent")?)?;
    let qlstm = Checkpoint::load(require(&cfg.out_dir, QLSTM_CKPT, "train-qlstm")?)?;
    let data = load_prepared(&cfg.out_dir)?;
    let run = backtest_checkpoints(&agent, &qlstm, &data, &cfg.env, cfg.trace)?;
    backtest::write_trades_csv(create(&cfg.out_dir.join(backtest::TRADES_FILE))?, &run.trades)?;
    backtest::write_equity_csv(create(&cfg.out_dir.join(backtest::EQUITY_FILE))?, &run.equity)?;
    if let Some(rows) = &run.trace {
        backtest::write_trace_csv(create(&cfg.out_dir.join(backtest::TRACE_FILE))?, rows)?;
    }
    compute_metrics(&run.trades, &run.equity)
}

pub fn report_stage(cfg: &RunConfig) -> Result<(Metrics, Vec<PathBuf>)> {
    prepare_out_dir(cfg)?;
    let dir = &cfg.out_dir;
    let trades_path = require(dir, backtest::TRADES_FILE, "backtest")?;
    let equity_path = require(dir, backtest::EQUITY_FILE, "backtest")?;
    let trades = backtest::read_trades_csv(fs::File::open(&trades_path).map_err(|e| Error::io(&trades_path, e))?)?;
    let curve = backtest::read_equity_csv(fs::File::open(&equity_path).map_err(|e| Error::io(&equity_path, e))?)?;
    let metrics = compute_metrics(&trades, &curve)?;
    let benchmarks = match &cfg.benchmarks {
        Some(p) => Some(read_benchmarks(fs::File::open(p).map_err(|e| Error::io(p, e))?)?),
        None => None,
    };
    let files = export_report(dir, &metrics, &trades, &curve, benchmarks.as_deref())?;
    Ok((metrics, files))
}

/// Writes the configured synthetic series as an OHLC CSV.
pub fn write_synthetic(cfg: &RunConfig, path: &Path) -> Result<usize> {
    let quotes = synthetic::generate(&cfg.synthetic);
    write_quotes(create(path)?, &quotes)?;
    Ok(quotes.len())
}

/// Every stage in order.
pub fn run_all(cfg: &RunConfig) -> Result<Metrics> {
    preprocess(cfg)?;
    train_qlstm_stage(cfg)?;
    train_agent_stage(cfg)?;
    backtest_stage(cfg)?;
    Ok(report_stage(cfg)?.0)
}
