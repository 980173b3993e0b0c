//! Out-of-sample evaluation: frozen-policy rollouts, trade accounting,
//! performance metrics and report files.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, Fill, Observation, RewardBreakdown, TradingEnv};
use crate::error::{Error, Result};
use crate::market_data::DATE_FORMAT;
use crate::qa3c::{greedy_action, ActorCritic};

/// Decision rule queried once per trading day.
pub trait Policy {
    fn act(&mut self, obs: &Observation) -> Result<Action>;
}

/// Argmax of the actor's distribution.
pub struct GreedyPolicy<'a> {
    net: &'a ActorCritic,
}

impl<'a> GreedyPolicy<'a> {
    pub fn new(net: &'a ActorCritic) -> Self {
        Self { net }
    }
}

impl Policy for GreedyPolicy<'_> {
    fn act(&mut self, obs: &Observation) -> Result<Action> {
        greedy_action(&self.net.policy(obs.as_slice())?)
    }
}

/// Uniformly random actions from a seeded stream.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _obs: &Observation) -> Result<Action> {
        Ok(Action::ALL[self.rng.random_range(0..Action::ALL.len())])
    }
}

/// Replays a fixed action list, then holds.
pub struct ScriptedPolicy {
    actions: Vec<Action>,
    cursor: usize,
}

impl ScriptedPolicy {
    pub fn new(actions: Vec<Action>) -> Self {
        Self { actions, cursor: 0 }
    }

    pub fn always_hold() -> Self {
        Self::new(Vec::new())
    }
}

impl Policy for ScriptedPolicy {
    fn act(&mut self, _obs: &Observation) -> Result<Action> {
        let a = self.actions.get(self.cursor).copied().unwrap_or(Action::Hold);
        self.cursor += 1;
        Ok(a)
    }
}

/// One sell-closed round trip; all buys since the previous exit are merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub entry_dates: Vec<NaiveDate>,
    pub exit_date: NaiveDate,
    /// Cost basis divided by units held.
    pub avg_entry: f64,
    pub exit_price: f64,
    pub notional: f64,
    pub pnl_pct: f64,
    pub pnl_cash: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquityPoint {
    pub date: NaiveDate,
    pub equity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub date: NaiveDate,
    pub action: Action,
    pub price: f64,
    pub cash: f64,
    pub units: f64,
    pub reward: f64,
    pub breakdown: RewardBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestRun {
    pub trades: Vec<TradeRecord>,
    pub equity: Vec<EquityPoint>,
    pub trace: Option<Vec<TraceRow>>,
}

/// Rolls `policy` over the environment's range without any learning.
///
/// Equity is marked at every close in the range, including the terminal bar,
/// so the curve has one point per bar and starts at the initial capital.
pub fn run_backtest(env: &mut TradingEnv, policy: &mut dyn Policy, trace: bool) -> Result<BacktestRun> {
    let mut obs = env.reset()?;
    let mut trades = Vec::new();
    let mut equity = Vec::with_capacity(env.range().len());
    let mut rows = trace.then(Vec::new);
    let mut pending_entries: Vec<NaiveDate> = Vec::new();

    loop {
        let bar = *env.current_bar();
        equity.push(EquityPoint {
            date: bar.date(),
            equity: env.portfolio().equity(bar.close()),
        });
        if env.is_done() {
            break;
        }
        let action = policy.act(&obs)?;
        let step = env.step(action)?;
        match step.fill {
            Some(Fill::Buy { .. }) => pending_entries.push(bar.date()),
            Some(Fill::Sell {
                price,
                units,
                proceeds,
                cost_basis,
                pnl_pct,
            }) => trades.push(TradeRecord {
                entry_dates: std::mem::take(&mut pending_entries),
                exit_date: bar.date(),
                avg_entry: cost_basis / units,
                exit_price: price,
                notional: cost_basis,
                pnl_pct,
                pnl_cash: proceeds - cost_basis,
            }),
            None => {}
        }
        if let Some(rows) = rows.as_mut() {
            rows.push(TraceRow {
                date: bar.date(),
                action,
                price: bar.close(),
                cash: env.portfolio().cash,
                units: env.portfolio().units,
                reward: step.reward,
                breakdown: step.breakdown,
            });
        }
        obs = step.observation;
    }
    Ok(BacktestRun {
        trades,
        equity,
        trace: rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub total_return_pct: f64,
    pub max_drawdown_pct: f64,
    pub total_trades: usize,
    /// `None` when there are no trades.
    pub win_rate_pct: Option<f64>,
    pub best_trade_pct: Option<f64>,
    pub worst_trade_pct: Option<f64>,
}

pub fn max_drawdown_pct(curve: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &e in curve {
        peak = peak.max(e);
        worst = worst.max(100.0 * (peak - e) / peak);
    }
    worst
}

pub fn compute_metrics(trades: &[TradeRecord], curve: &[EquityPoint]) -> Result<Metrics> {
    let (first, last) = match (curve.first(), curve.last()) {
        (Some(f), Some(l)) => (f.equity, l.equity),
        _ => return Err(Error::EmptyInput("equity curve")),
    };
    let values: Vec<f64> = curve.iter().map(|p| p.equity).collect();
    let pnl = trades.iter().map(|t| t.pnl_pct);
    let wins = trades.iter().filter(|t| t.pnl_pct > 0.0).count();
    Ok(Metrics {
        total_return_pct: 100.0 * (last - first) / first,
        max_drawdown_pct: max_drawdown_pct(&values),
        total_trades: trades.len(),
        win_rate_pct: (!trades.is_empty()).then(|| 100.0 * wins as f64 / trades.len() as f64),
        best_trade_pct: pnl.clone().reduce(f64::max),
        worst_trade_pct: pnl.reduce(f64::min),
    })
}

fn fmt_date(d: NaiveDate) -> String {
    d.format(DATE_FORMAT).to_string()
}

fn parse_date(s: &str, line: u64) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, DATE_FORMAT).map_err(|e| Error::MalformedRow {
        line,
        reason: format!("date {s:?}: {e}"),
    })
}

fn parse_f64(s: &str, line: u64, what: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::MalformedRow {
        line,
        reason: format!("{what} {s:?} is not a number"),
    })
}

fn record_line(r: &csv::StringRecord) -> u64 {
    r.position().map_or(0, |p| p.line())
}

pub const TRADE_COLUMNS: [&str; 7] = [
    "entry_dates",
    "exit_date",
    "avg_entry",
    "exit_price",
    "notional",
    "pnl_pct",
    "pnl_cash",
];

/// Entry dates are `;`-separated within a single field.
pub fn write_trades_csv<W: Write>(writer: W, trades: &[TradeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRADE_COLUMNS)?;
    for t in trades {
        let entries: Vec<String> = t.entry_dates.iter().map(|d| fmt_date(*d)).collect();
        w.write_record([
            entries.join(";"),
            fmt_date(t.exit_date),
            t.avg_entry.to_string(),
            t.exit_price.to_string(),
            t.notional.to_string(),
            t.pnl_pct.to_string(),
            t.pnl_cash.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<trades>", e))?;
    Ok(())
}

pub fn read_trades_csv<R: std::io::Read>(reader: R) -> Result<Vec<TradeRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let r = rec?;
        let line = record_line(&r);
        if r.len() != TRADE_COLUMNS.len() {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected {} fields, got {}", TRADE_COLUMNS.len(), r.len()),
            });
        }
        let entry_dates = if r[0].is_empty() {
            Vec::new()
        } else {
            r[0].split(';').map(|d| parse_date(d, line)).collect::<Result<_>>()?
        };
        out.push(TradeRecord {
            entry_dates,
            exit_date: parse_date(&r[1], line)?,
            avg_entry: parse_f64(&r[2], line, "avg_entry")?,
            exit_price: parse_f64(&r[3], line, "exit_price")?,
            notional: parse_f64(&r[4], line, "notional")?,
            pnl_pct: parse_f64(&r[5], line, "pnl_pct")?,
            pnl_cash: parse_f64(&r[6], line, "pnl_cash")?,
        });
    }
    Ok(out)
}

pub fn write_equity_csv<W: Write>(writer: W, curve: &[EquityPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "equity"])?;
    for p in curve {
        w.write_record([fmt_date(p.date), p.equity.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<equity>", e))?;
    Ok(())
}

pub fn read_equity_csv<R: std::io::Read>(reader: R) -> Result<Vec<EquityPoint>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let r = rec?;
        let line = record_line(&r);
        if r.len() != 2 {
            return Err(Error::MalformedRow {
                line,
                reason: format!("expected 2 fields, got {}", r.len()),
            });
        }
        out.push(EquityPoint {
            date: parse_date(&r[0], line)?,
            equity: parse_f64(&r[1], line, "equity")?,
        });
    }
    Ok(out)
}

pub fn write_trace_csv<W: Write>(writer: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "date",
        "action",
        "price",
        "cash",
        "units",
        "reward",
        "time_cost",
        "entry_term",
        "exit_term",
        "holding_term",
        "total_before_clip",
    ])?;
    for r in rows {
        let b = &r.breakdown;
        w.write_record([
            fmt_date(r.date),
            r.action.name().to_string(),
            r.price.to_string(),
            r.cash.to_string(),
            r.units.to_string(),
            r.reward.to_string(),
            b.time_cost.to_string(),
            b.entry_term.to_string(),
            b.exit_term.to_string(),
            b.holding_term.to_string(),
            b.total_before_clip.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<trace>", e))?;
    Ok(())
}

/// External benchmark row, kept as the original strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkRow {
    pub ticker: String,
    pub name: String,
    pub return_pct: String,
}

/// Reads `ticker,name,return_pct`; returns may carry a trailing `%`.
pub fn read_benchmarks<R: std::io::Read>(reader: R) -> Result<Vec<BenchmarkRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::MalformedRow {
                line: 1,
                reason: format!("missing column {name:?}"),
            })
    };
    let (ti, ni, ri) = (col("ticker")?, col("name")?, col("return_pct")?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let r = rec?;
        let line = record_line(&r);
        let field = |i: usize| {
            r.get(i).map(str::to_string).ok_or_else(|| Error::MalformedRow {
                line,
                reason: "short row".into(),
            })
        };
        let row = BenchmarkRow {
            ticker: field(ti)?,
            name: field(ni)?,
            return_pct: field(ri)?,
        };
        parse_f64(row.return_pct.trim().trim_end_matches('%'), line, "return_pct")?;
        out.push(row);
    }
    Ok(out)
}

pub fn write_comparison_csv<W: Write>(writer: W, metrics: &Metrics, benchmarks: &[BenchmarkRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["ticker", "name", "return_pct"])?;
    w.write_record([
        "QA3C".to_string(),
        "QA3C agent (backtest)".to_string(),
        format!("{:.2}%", metrics.total_return_pct),
    ])?;
    for b in benchmarks {
        w.write_record([&b.ticker, &b.name, &b.return_pct])?;
    }
    w.flush().map_err(|e| Error::io("<comparison>", e))?;
    Ok(())
}

const CHART_W: f64 = 800.0;
const CHART_H: f64 = 400.0;
const MARGIN: f64 = 50.0;

/// Cumulative P&L (equity minus starting equity) as a single SVG polyline.
pub fn render_pnl_svg(curve: &[EquityPoint]) -> String {
    let base = curve.first().map_or(0.0, |p| p.equity);
    let pnl: Vec<f64> = curve.iter().map(|p| p.equity - base).collect();
    let lo = pnl.iter().copied().fold(0.0f64, f64::min);
    let hi = pnl.iter().copied().fold(0.0f64, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let n = pnl.len().max(2) - 1;
    let x = |i: usize| MARGIN + (CHART_W - 2.0 * MARGIN) * i as f64 / n as f64;
    let y = |v: f64| CHART_H - MARGIN - (CHART_H - 2.0 * MARGIN) * (v - lo) / span;

    let points: Vec<String> = pnl
        .iter()
        .enumerate()
        .map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v)))
        .collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CHART_W}" height="{CHART_H}" viewBox="0 0 {CHART_W} {CHART_H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN}" y1="{zy:.2}" x2="{xr}" y2="{zy:.2}" stroke="grey" stroke-dasharray="4 4"/>"#,
        zy = y(0.0),
        xr = CHART_W - MARGIN
    );
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="30" font-family="sans-serif" font-size="16">Cumulative P&amp;L</text>"#
    );
    if let (Some(a), Some(b)) = (curve.first(), curve.last()) {
        let _ = writeln!(
            svg,
            r#"<text x="{MARGIN}" y="{yb}" font-family="sans-serif" font-size="12">{} to {}</text>"#,
            fmt_date(a.date),
            fmt_date(b.date),
            yb = CHART_H - 15.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{xr}" y="30" font-family="sans-serif" font-size="12" text-anchor="end">min {lo:.2} / max {hi:.2}</text>"#,
        xr = CHART_W - MARGIN
    );
    let _ = writeln!(
        svg,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#,
        points.join(" ")
    );
    svg.push_str("</svg>\n");
    svg
}

pub const METRICS_FILE: &str = "metrics.json";
pub const TRADES_FILE: &str = "trades.csv";
pub const EQUITY_FILE: &str = "equity.csv";
pub const CHART_FILE: &str = "pnl_chart.svg";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const TRACE_FILE: &str = "trace.csv";

pub fn metrics_json(metrics: &Metrics) -> String {
    let mut s = serde_json::to_string_pretty(metrics).expect("metrics serialize");
    s.push('\n');
    s
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes the report files into `dir` and returns their paths.
pub fn export_report(
    dir: &Path,
    metrics: &Metrics,
    trades: &[TradeRecord],
    curve: &[EquityPoint],
    benchmarks: Option<&[BenchmarkRow]>,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join(METRICS_FILE);
    fs::write(&path, metrics_json(metrics)).map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join(TRADES_FILE);
    write_trades_csv(create(&path)?, trades)?;
    written.push(path);

    let path = dir.join(EQUITY_FILE);
    write_equity_csv(create(&path)?, curve)?;
    written.push(path);

    let path = dir.join(CHART_FILE);
    fs::write(&path, render_pnl_svg(curve)).map_err(|e| Error::io(&path, e))?;
    written.push(path);

    if let Some(rows) = benchmarks {
        let path = dir.join(COMPARISON_FILE);
        write_comparison_csv(create(&path)?, metrics, rows)?;
        written.push(path);
    }
    Ok(written)
}

/// Recomputes metrics from `trades.csv` and `equity.csv` in `dir`.
pub fn metrics_from_exports(dir: &Path) -> Result<Metrics> {
    let open = |name: &str| {
        let p = dir.join(name);
        fs::File::open(&p).map_err(|e| Error::io(&p, e))
    };
    let trades = read_trades_csv(open(TRADES_FILE)?)?;
    let curve = read_equity_csv(open(EQUITY_FILE)?)?;
    compute_metrics(&trades, &curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 3, d).unwrap()
    }

    fn curve(values: &[f64]) -> Vec<EquityPoint> {
        values
            .iter()
            .enumerate()
            .map(|(i, &equity)| EquityPoint {
                date: day(i as u32 + 1),
                equity,
            })
            .collect()
    }

    fn trade(pnl_pct: f64) -> TradeRecord {
        TradeRecord {
            entry_dates: vec![day(1), day(2)],
            exit_date: day(3),
            avg_entry: 10.0,
            exit_price: 10.0 * (1.0 + pnl_pct / 100.0),
            notional: 2000.0,
            pnl_pct,
            pnl_cash: 20.0 * pnl_pct,
        }
    }

    #[test]
    fn drawdown_example() {
        let m = compute_metrics(&[], &curve(&[100.0, 110.0, 99.0, 120.0])).unwrap();
        assert!((m.max_drawdown_pct - 10.0).abs() < 1e-12);
        assert!((m.total_return_pct - 20.0).abs() < 1e-12);
        assert_eq!(m.win_rate_pct, None);
        assert_eq!(m.best_trade_pct, None);
    }

    #[test]
    fn trade_counting() {
        let trades: Vec<_> = [0.5, -0.2, 0.1].into_iter().map(trade).collect();
        let m = compute_metrics(&trades, &curve(&[100.0, 111.87])).unwrap();
        assert!((m.win_rate_pct.unwrap() - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.best_trade_pct, Some(0.5));
        assert_eq!(m.worst_trade_pct, Some(-0.2));
        assert_eq!(m.total_trades, 3);
        assert!((m.total_return_pct - 11.87).abs() < 1e-9);
    }

    #[test]
    fn monotone_curve_has_no_drawdown() {
        assert_eq!(max_drawdown_pct(&[1.0, 1.0, 2.0, 3.5, 3.5]), 0.0);
    }

    #[test]
    fn empty_curve_is_rejected() {
        assert!(compute_metrics(&[], &[]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let trades: Vec<_> = [0.1 + 0.2, -1.0 / 3.0].into_iter().map(trade).collect();
        let mut buf = Vec::new();
        write_trades_csv(&mut buf, &trades).unwrap();
        assert_eq!(read_trades_csv(buf.as_slice()).unwrap(), trades);

        let c = curve(&[100000.0, 100000.1 / 3.0, 99999.7]);
        let mut buf = Vec::new();
        write_equity_csv(&mut buf, &c).unwrap();
        assert_eq!(read_equity_csv(buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn chart_has_one_vertex_per_point() {
        let c = curve(&[100.0, 101.0, 99.5, 103.0, 102.0]);
        let svg = render_pnl_svg(&c);
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split_whitespace().count(), c.len());
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn benchmark_rows_pass_through() {
        let input = "ticker,name,return_pct\nFXB,Invesco CurrencyShares British Pound,13.81%\nUUP,\"Dollar Bullish, Fund\",-2.5\n";
        let rows = read_benchmarks(input.as_bytes()).unwrap();
        let m = compute_metrics(&[], &curve(&[100.0, 105.0])).unwrap();
        let mut out = Vec::new();
        write_comparison_csv(&mut out, &m, &rows).unwrap();
        let out = String::from_utf8(out).unwrap();
        assert!(out.contains("FXB,Invesco CurrencyShares British Pound,13.81%\n"));
        assert!(out.contains("UUP,\"Dollar Bullish, Fund\",-2.5\n"));
        assert!(out.contains("QA3C,QA3C agent (backtest),5.00%\n"));
        assert!(read_benchmarks("ticker,name,return_pct\nX,y,abc\n".as_bytes()).is_err());
    }

    #[test]
    fn scripted_policy_holds_after_script() {
        let mut p = ScriptedPolicy::new(vec![Action::Buy]);
        let obs = Observation([0.0; 10]);
        assert_eq!(p.act(&obs).unwrap(), Action::Buy);
        assert_eq!(p.act(&obs).unwrap(), Action::Hold);
    }

    mod with_env {
        use super::super::*;
        use crate::env::{EnvConfig, MarketSeries};
        use crate::market_data::{compute_indicators, usable_bars, Quote, WARMUP};
        use std::sync::Arc;

        fn env_from_tail(tail: &[f64]) -> TradingEnv {
            let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
            let closes: Vec<f64> = std::iter::repeat_n(50.0, WARMUP - 1)
                .chain(tail.iter().copied())
                .collect();
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
            let series = Arc::new(MarketSeries::new(bars, vec![[0.5, 0.5]; n]).unwrap());
            TradingEnv::new(EnvConfig::default(), series, 0..n).unwrap()
        }

        #[test]
        fn always_hold_is_flat() {
            let mut env = env_from_tail(&[50.0, 51.0, 49.0, 52.0]);
            let run = run_backtest(&mut env, &mut ScriptedPolicy::always_hold(), false).unwrap();
            assert!(run.trades.is_empty());
            assert_eq!(run.equity.len(), 4);
            assert!(run.equity.iter().all(|p| p.equity == 100_000.0));
        }

        #[test]
        fn scripted_round_trip() {
            // Buy 1000 at 50, buy 1000 at 40, sell all at 45.
            let mut env = env_from_tail(&[50.0, 40.0, 45.0, 45.0]);
            let mut policy = ScriptedPolicy::new(vec![Action::Buy, Action::Buy, Action::Sell]);
            let run = run_backtest(&mut env, &mut policy, true).unwrap();
            assert_eq!(run.trades.len(), 1);
            let t = &run.trades[0];
            let units = 1000.0 / 50.0 + 1000.0 / 40.0;
            let avg = 2000.0 / units;
            assert_eq!(t.entry_dates.len(), 2);
            assert!((t.avg_entry - avg).abs() < 1e-9);
            assert!((t.pnl_pct - 100.0 * (45.0 - avg) / avg).abs() < 1e-9);
            assert!((t.pnl_cash - (45.0 * units - 2000.0)).abs() < 1e-9);
            assert!(t.exit_date > *t.entry_dates.last().unwrap());

            let eq: Vec<f64> = run.equity.iter().map(|p| p.equity).collect();
            assert_eq!(eq[0], 100_000.0);
            assert!((eq[1] - (98_000.0 + 20.0 * 40.0 + 1000.0)).abs() < 1e-9);
            let last = *eq.last().unwrap();
            assert!((last - 100_000.0 - t.pnl_cash).abs() < 1e-9);
            assert_eq!(run.trace.as_ref().unwrap().len(), 3);

            let again = run_backtest(&mut env, &mut ScriptedPolicy::new(vec![Action::Buy, Action::Buy, Action::Sell]), true).unwrap();
            assert_eq!(again, run);
        }
    }
}
