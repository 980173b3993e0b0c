//! Quantum-enhanced FX trading research toolkit.
//!
//! A quantum LSTM forecaster turns recent daily bars into up/down
//! probabilities; a hybrid quantum actor-critic consumes those alongside
//! portfolio and trend features to trade a single currency pair long-only.

pub mod backtest;
pub mod checkpoint;
pub mod config;
pub mod env;
pub mod error;
pub mod market_data;
pub mod nn;
pub mod oracle;
pub mod pipeline;
pub mod qa3c;
pub mod qlstm;
pub mod quantum;
pub mod selftest;
pub mod synthetic;

pub use error::{Error, Result};
