//! Run configuration: one TOML file covering every pipeline stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::market_data::LabelRule;
use crate::qa3c::{NetConfig, TrainConfig};
use crate::qlstm::QlstmConfig;
use crate::synthetic::SyntheticSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// Parameter initialization for both networks.
    pub init: u64,
    /// Per-epoch shuffling of forecaster training samples.
    pub shuffle: u64,
    /// Agent action sampling.
    pub sampling: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            init: 42,
            shuffle: 43,
            sampling: 44,
        }
    }
}

impl Seeds {
    pub fn all(seed: u64) -> Self {
        Self {
            init: seed,
            shuffle: seed,
            sampling: seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// OHLC CSV; the synthetic generator is used when unset.
    pub data: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub train_fraction: f64,
    pub label: LabelRule,
    pub synthetic: SyntheticSpec,
    pub qlstm: QlstmConfig,
    pub env: EnvConfig,
    pub network: NetConfig,
    pub agent: TrainConfig,
    pub seeds: Seeds,
    /// Optional `ticker,name,return_pct` table merged into the report.
    pub benchmarks: Option<PathBuf>,
    /// Write a per-step backtest trace.
    pub trace: bool,
    /// Write the normalized feature table during preprocessing.
    pub dump_features: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            out_dir: PathBuf::from("out"),
            train_fraction: 0.8,
            label: LabelRule::default(),
            synthetic: SyntheticSpec::default(),
            qlstm: QlstmConfig::default(),
            env: EnvConfig::default(),
            network: NetConfig::default(),
            agent: TrainConfig::default(),
            seeds: Seeds::default(),
            benchmarks: None,
            trace: false,
            dump_features: false,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub episodes: Option<usize>,
    pub benchmarks: Option<PathBuf>,
    pub trace: bool,
    pub dump_features: bool,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(d) = &o.data {
            self.data = Some(d.clone());
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(s) = o.seed {
            self.seeds = Seeds::all(s);
        }
        if let Some(w) = o.workers {
            self.agent.workers = w;
        }
        if let Some(e) = o.episodes {
            self.agent.max_episodes = e;
        }
        if let Some(b) = &o.benchmarks {
            self.benchmarks = Some(b.clone());
        }
        self.trace |= o.trace;
        self.dump_features |= o.dump_features;
    }

    /// Agent training settings with the sampling seed filled in.
    pub fn agent_train(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seeds.sampling,
            ..self.agent.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = &self.data {
            if !p.is_file() {
                return Err(Error::Config(format!(
                    "data file {} does not exist (omit `data` to use synthetic bars)",
                    p.display()
                )));
            }
        }
        if let Some(p) = &self.benchmarks {
            if !p.is_file() {
                return Err(Error::Config(format!("benchmarks file {} does not exist", p.display())));
            }
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction {} must lie strictly between 0 and 1",
                self.train_fraction
            )));
        }
        if self.label.seq_len != self.qlstm.seq_len {
            return Err(Error::Config(format!(
                "label.seq_len ({}) must equal qlstm.seq_len ({})",
                self.label.seq_len, self.qlstm.seq_len
            )));
        }
        if self.label.horizon == 0 || self.label.threshold.is_nan() || self.label.threshold < 0.0 {
            return Err(Error::Config("label.horizon must be ≥ 1 and label.threshold ≥ 0".into()));
        }
        if self.qlstm.input_dim != crate::market_data::FORECAST_FEATURES {
            return Err(Error::Config(format!(
                "qlstm.input_dim must be {} (open, high, low, close, ma5, ma10)",
                crate::market_data::FORECAST_FEATURES
            )));
        }
        if self.data.is_none() && self.synthetic.n_days < crate::market_data::WARMUP + 10 {
            return Err(Error::Config(format!(
                "synthetic.n_days {} is too short; need at least {}",
                self.synthetic.n_days,
                crate::market_data::WARMUP + 10
            )));
        }
        self.qlstm.validate()?;
        self.env.validate()?;
        self.network.validate()?;
        self.agent.validate()?;
        Ok(())
    }

    /// Fully expanded TOML, defaults included.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_values() {
        let c = RunConfig::default();
        assert_eq!(c.train_fraction, 0.8);
        assert_eq!(c.qlstm.seq_len, 4);
        assert_eq!(c.qlstm.epochs, 50);
        assert_eq!(c.qlstm.lr, 5e-3);
        assert_eq!(c.agent.workers, 8);
        assert_eq!(c.agent.rollout_len, 30);
        assert_eq!(c.agent.gamma, 0.995);
        assert_eq!(c.agent.entropy_beta, 0.05);
        assert_eq!(c.agent.lr, 1e-5);
        assert_eq!((c.env.clip_low, c.env.clip_high), (-15.0, 30.0));
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml_str(&c.to_toml()).unwrap(), c);

        let partial = RunConfig::from_toml_str("[agent]\nworkers = 2\n[seeds]\ninit = 9\n").unwrap();
        assert_eq!(partial.agent.workers, 2);
        assert_eq!(partial.agent.rollout_len, 30);
        assert_eq!(partial.seeds.init, 9);
        assert_eq!(partial.seeds.shuffle, Seeds::default().shuffle);
        assert!(RunConfig::from_toml_str("bogus = 1\n").is_err());
    }

    #[test]
    fn flags_win() {
        let mut c = RunConfig::from_toml_str("[agent]\nworkers = 2\nmax_episodes = 10\n").unwrap();
        c.apply(&Overrides {
            seed: Some(5),
            workers: Some(1),
            trace: true,
            ..Overrides::default()
        });
        assert_eq!(c.agent.workers, 1);
        assert_eq!(c.agent.max_episodes, 10);
        assert_eq!(c.seeds, Seeds::all(5));
        assert_eq!(c.agent_train().seed, 5);
        assert!(c.trace);
    }

    #[test]
    fn validation_messages() {
        let c = RunConfig {
            data: Some("/definitely/not/here.csv".into()),
            ..RunConfig::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("does not exist"));
        let mut c = RunConfig::default();
        c.label.seq_len = 5;
        assert!(c.validate().unwrap_err().to_string().contains("seq_len"));
        let c = RunConfig {
            train_fraction: 1.0,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
