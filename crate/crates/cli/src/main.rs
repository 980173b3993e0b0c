use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use qfx_core::config::{Overrides, RunConfig};
use qfx_core::{pipeline, selftest, Error};

/// Quantum LSTM forecaster and quantum actor-critic FX trading pipeline.
#[derive(Debug, Parser)]
#[command(name = "qfx", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// OHLC CSV (date,open,high,low,close). Synthetic bars when omitted.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Output directory shared by all stages.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sets the init, shuffle and sampling seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Asynchronous training workers.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Agent training episodes.
    #[arg(long, global = true)]
    episodes: Option<usize>,
    /// Write a per-step trace during backtest.
    #[arg(long, global = true)]
    trace: bool,
    /// Write the normalized feature table during preprocess.
    #[arg(long, global = true)]
    dump_features: bool,
    /// Benchmark return table (ticker,name,return_pct) merged into the report.
    #[arg(long, global = true)]
    benchmarks: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Clean, enrich, split and normalize the input series.
    Preprocess,
    /// Train the quantum LSTM forecaster.
    TrainQlstm,
    /// Train the actor-critic agent with asynchronous workers.
    TrainAgent,
    /// Greedy evaluation over the test window.
    Backtest,
    /// Metrics, trade log, equity curve and P&L chart.
    Report,
    /// Run the built-in oracle suites.
    Selftest,
    /// Write the configured synthetic series to a CSV file.
    Synth {
        /// Destination CSV.
        path: PathBuf,
    },
    /// Every stage from preprocess to report.
    Run,
}

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn validation(error: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_VALIDATION,
        error,
    }
}

fn classify(error: Error) -> Failure {
    let code = match &error {
        Error::Config(_) | Error::MissingArtifact { .. } => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    };
    Failure {
        code,
        error: error.into(),
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(validation)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        data: cli.data.clone(),
        out_dir: cli.out.clone(),
        seed: cli.seed,
        workers: cli.workers,
        episodes: cli.episodes,
        benchmarks: cli.benchmarks.clone(),
        trace: cli.trace,
        dump_features: cli.dump_features,
    });
    cfg.validate().map_err(|e| validation(e.into()))?;
    Ok(cfg)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Command::Selftest = cli.command {
        let seed = cli.seed.unwrap_or(2024);
        let reports = selftest::run_all(seed);
        let mut all_ok = true;
        for r in &reports {
            let status = if r.ok() { "PASS" } else { "FAIL" };
            println!("{status} {:<16} {}/{}", r.name, r.passed, r.total);
            for f in &r.failures {
                println!("     {f}");
            }
            all_ok &= r.ok();
        }
        return if all_ok {
            Ok(())
        } else {
            Err(Failure {
                code: EXIT_RUNTIME,
                error: anyhow::anyhow!("selftest failed"),
            })
        };
    }

    let cfg = resolve_config(cli)?;
    let out = cfg.out_dir.display().to_string();
    match &cli.command {
        Command::Preprocess => {
            let data = pipeline::preprocess(&cfg).map_err(classify)?;
            println!(
                "preprocess: {} quotes from {} -> {} usable bars ({} train / {} test) in {out}",
                data.raw_quotes,
                data.source,
                data.bars.len(),
                data.train_len,
                data.bars.len() - data.train_len
            );
        }
        Command::TrainQlstm => {
            let s = pipeline::train_qlstm_stage(&cfg).map_err(classify)?;
            println!(
                "train-qlstm: {} train / {} test samples, final train acc {:.4}, test acc {}",
                s.train_samples,
                s.test_samples,
                s.final_train_acc,
                fmt_opt(s.final_test_acc)
            );
        }
        Command::TrainAgent => {
            let s = pipeline::train_agent_stage(&cfg).map_err(classify)?;
            println!(
                "train-agent: {} episodes, {} updates ({} skipped), mean reward first/last 100: {} / {}",
                s.episodes,
                s.version,
                s.skipped_updates,
                fmt_opt(s.first_mean_reward),
                fmt_opt(s.last_mean_reward)
            );
        }
        Command::Backtest => {
            let m = pipeline::backtest_stage(&cfg).map_err(classify)?;
            println!(
                "backtest: total return {:.4}%, max drawdown {:.4}%, {} trades",
                m.total_return_pct, m.max_drawdown_pct, m.total_trades
            );
        }
        Command::Report => {
            let (m, files) = pipeline::report_stage(&cfg).map_err(classify)?;
            println!("{}", qfx_core::backtest::metrics_json(&m).trim_end());
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Command::Synth { path } => {
            let n = pipeline::write_synthetic(&cfg, path).map_err(classify)?;
            println!("synth: wrote {n} quotes to {}", path.display());
        }
        Command::Run => {
            let m = pipeline::run_all(&cfg).map_err(classify)?;
            println!("{}", qfx_core::backtest::metrics_json(&m).trim_end());
        }
        Command::Selftest => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
