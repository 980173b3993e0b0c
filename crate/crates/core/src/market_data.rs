//! Daily OHLC loading, cleaning, indicators, scaling and forecast labeling.

use std::collections::BTreeMap;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Longest indicator window; bars before this index lack a full MA60.
pub const WARMUP: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

/// One trading day with trailing indicators of the close. Indicator fields
/// are NaN until their window is full.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnrichedBar {
    pub quote: Quote,
    pub ma5: f64,
    pub ma10: f64,
    pub ma20: f64,
    pub ma60: f64,
    /// Population σ/μ of the last 20 closes.
    pub vol20: f64,
}

impl EnrichedBar {
    pub fn is_usable(&self) -> bool {
        [self.ma5, self.ma10, self.ma20, self.ma60, self.vol20]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn date(&self) -> NaiveDate {
        self.quote.date
    }

    pub fn close(&self) -> f64 {
        self.quote.close
    }

    /// `[open, high, low, close, ma5, ma10]`, the forecaster's per-step input.
    pub fn forecast_features(&self) -> [f64; FORECAST_FEATURES] {
        let q = &self.quote;
        [q.open, q.high, q.low, q.close, self.ma5, self.ma10]
    }
}

pub const FORECAST_FEATURES: usize = 6;
pub const FORECAST_FEATURE_NAMES: [&str; FORECAST_FEATURES] =
    ["open", "high", "low", "close", "ma5", "ma10"];

fn parse_price(field: Option<&str>, name: &str, line: u64) -> Result<f64> {
    let raw = field.map(str::trim).unwrap_or("");
    raw.parse::<f64>().map_err(|_| Error::MalformedRow {
        line,
        reason: format!("{name} {raw:?} is not a number"),
    })
}

/// Reads `date,open,high,low,close`, drops rows whose close is missing, zero
/// or non-finite, keeps the last record for duplicated dates and sorts by date.
pub fn load_quotes(path: impl AsRef<Path>) -> Result<Vec<Quote>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_quotes(file)
}

pub fn read_quotes<R: std::io::Read>(reader: R) -> Result<Vec<Quote>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::MalformedRow {
                line: 1,
                reason: format!("missing column {name:?}"),
            })
    };
    let (ci_date, ci_open, ci_high, ci_low, ci_close) =
        (col("date")?, col("open")?, col("high")?, col("low")?, col("close")?);

    let mut by_date: BTreeMap<NaiveDate, Quote> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let raw_date = record.get(ci_date).unwrap_or("");
        let date = NaiveDate::parse_from_str(raw_date, DATE_FORMAT).map_err(|_| {
            Error::MalformedRow {
                line,
                reason: format!("date {raw_date:?} is not YYYY-MM-DD"),
            }
        })?;
        let close = match record.get(ci_close).unwrap_or("") {
            "" => continue,
            raw => parse_price(Some(raw), "close", line)?,
        };
        if !close.is_finite() || close <= 0.0 {
            continue;
        }
        let quote = Quote {
            date,
            open: parse_price(record.get(ci_open), "open", line)?,
            high: parse_price(record.get(ci_high), "high", line)?,
            low: parse_price(record.get(ci_low), "low", line)?,
            close,
        };
        by_date.insert(date, quote);
    }
    if by_date.is_empty() {
        return Err(Error::EmptyAfterCleaning);
    }
    Ok(by_date.into_values().collect())
}

pub fn write_quotes<W: Write>(writer: W, quotes: &[Quote]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "open", "high", "low", "close"])?;
    for q in quotes {
        w.write_record([
            q.date.format(DATE_FORMAT).to_string(),
            q.open.to_string(),
            q.high.to_string(),
            q.low.to_string(),
            q.close.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<quotes>", e))?;
    Ok(())
}

fn trailing_mean(closes: &[f64], i: usize, n: usize) -> f64 {
    if i + 1 < n {
        return f64::NAN;
    }
    closes[i + 1 - n..=i].iter().sum::<f64>() / n as f64
}

fn trailing_rel_vol(closes: &[f64], i: usize, n: usize) -> f64 {
    if i + 1 < n {
        return f64::NAN;
    }
    let window = &closes[i + 1 - n..=i];
    let mean = window.iter().sum::<f64>() / n as f64;
    let var = window.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n as f64;
    var.sqrt() / mean
}

/// Trailing MA5/10/20/60 and 20-day relative volatility for every quote.
/// The first `WARMUP - 1` bars carry incomplete indicators.
pub fn compute_indicators(quotes: &[Quote]) -> Result<Vec<EnrichedBar>> {
    if quotes.len() < WARMUP {
        return Err(Error::InsufficientHistory {
            needed: WARMUP,
            got: quotes.len(),
        });
    }
    let closes: Vec<f64> = quotes.iter().map(|q| q.close).collect();
    Ok(quotes
        .iter()
        .enumerate()
        .map(|(i, &quote)| EnrichedBar {
            quote,
            ma5: trailing_mean(&closes, i, 5),
            ma10: trailing_mean(&closes, i, 10),
            ma20: trailing_mean(&closes, i, 20),
            ma60: trailing_mean(&closes, i, 60),
            vol20: trailing_rel_vol(&closes, i, 20),
        })
        .collect())
}

/// Drops the warm-up bars, returning only bars with complete indicators.
pub fn usable_bars(bars: Vec<EnrichedBar>) -> Vec<EnrichedBar> {
    bars.into_iter().filter(EnrichedBar::is_usable).collect()
}

/// Chronological split at `floor(len × train_fraction)`.
pub fn temporal_split<T>(items: &[T], train_fraction: f64) -> Result<(&[T], &[T])> {
    if items.is_empty() {
        return Err(Error::EmptyInput("temporal_split"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    let cut = (items.len() as f64 * train_fraction).floor() as usize;
    Ok(items.split_at(cut))
}

pub const CLAMP_LOW: f64 = -0.5;
pub const CLAMP_HIGH: f64 = 1.5;

/// Per-feature min-max ranges fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl NormalizationSpec {
    pub fn fit<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut iter = rows.into_iter();
        let first = iter.next().ok_or(Error::EmptyInput("fit_minmax"))?;
        let mut mins = first.to_vec();
        let mut maxs = first.to_vec();
        for row in iter {
            if row.len() != mins.len() {
                return Err(Error::ShapeMismatch {
                    context: "fit_minmax row",
                    expected: mins.len(),
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        Ok(Self { mins, maxs })
    }

    /// Fits on the forecaster features of `bars`.
    pub fn fit_forecast(bars: &[EnrichedBar]) -> Result<Self> {
        let rows: Vec<[f64; FORECAST_FEATURES]> =
            bars.iter().map(EnrichedBar::forecast_features).collect();
        Self::fit(rows.iter().map(|r| r.as_slice()))
    }

    pub fn apply_value(&self, feature: usize, x: f64) -> f64 {
        let (lo, hi) = (self.mins[feature], self.maxs[feature]);
        if hi - lo <= 0.0 {
            return 0.5;
        }
        ((x - lo) / (hi - lo)).clamp(CLAMP_LOW, CLAMP_HIGH)
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &x)| self.apply_value(j, x))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Up = 0,
    Down = 1,
}

impl Direction {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelRule {
    pub seq_len: usize,
    pub horizon: usize,
    pub threshold: f64,
}

impl Default for LabelRule {
    fn default() -> Self {
        Self {
            seq_len: 4,
            horizon: 5,
            threshold: 0.012,
        }
    }
}

impl LabelRule {
    /// Strict ±threshold test on the close-to-close forward return.
    pub fn label(&self, close_now: f64, close_ahead: f64) -> Option<Direction> {
        let ret = (close_ahead - close_now) / close_now;
        if ret > self.threshold {
            Some(Direction::Up)
        } else if ret < -self.threshold {
            Some(Direction::Down)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSample {
    /// `seq_len` rows of normalized forecaster features, oldest first.
    pub window: Vec<Vec<f64>>,
    pub label: Direction,
    pub anchor_index: usize,
}

/// Normalized `seq_len × 6` window ending at `anchor` (inclusive).
pub fn forecast_window(
    bars: &[EnrichedBar],
    norm: &NormalizationSpec,
    anchor: usize,
    seq_len: usize,
) -> Option<Vec<Vec<f64>>> {
    if anchor + 1 < seq_len || anchor >= bars.len() {
        return None;
    }
    Some(
        bars[anchor + 1 - seq_len..=anchor]
            .iter()
            .map(|b| norm.apply(&b.forecast_features()))
            .collect(),
    )
}

/// Labeled samples for anchors in `anchors` whose look-ahead bar also lies
/// inside `anchors`. Days inside the ±threshold band emit nothing.
pub fn build_forecast_dataset(
    bars: &[EnrichedBar],
    norm: &NormalizationSpec,
    rule: &LabelRule,
    anchors: Range<usize>,
) -> Vec<ForecastSample> {
    let end = anchors.end.min(bars.len());
    let mut out = Vec::new();
    for t in anchors.start..end {
        if t + rule.horizon >= end {
            break;
        }
        let Some(label) = rule.label(bars[t].close(), bars[t + rule.horizon].close()) else {
            continue;
        };
        if let Some(window) = forecast_window(bars, norm, t, rule.seq_len) {
            out.push(ForecastSample {
                window,
                label,
                anchor_index: t,
            });
        }
    }
    out
}

/// Audit dump: date, split, normalized forecaster features, raw agent
/// indicators and the forecast label (blank when excluded).
pub fn write_feature_dump<W: Write>(
    writer: W,
    bars: &[EnrichedBar],
    norm: &NormalizationSpec,
    train_len: usize,
    rule: &LabelRule,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["date", "split"];
    header.extend(FORECAST_FEATURE_NAMES);
    header.extend(["ma20", "ma60", "vol20", "label"]);
    w.write_record(&header)?;
    for (i, bar) in bars.iter().enumerate() {
        let in_train = i < train_len;
        let limit = if in_train { train_len } else { bars.len() };
        let label = if i + rule.horizon < limit {
            match rule.label(bar.close(), bars[i + rule.horizon].close()) {
                Some(Direction::Up) => "up",
                Some(Direction::Down) => "down",
                None => "",
            }
        } else {
            ""
        };
        let mut row = vec![
            bar.date().format(DATE_FORMAT).to_string(),
            if in_train { "train" } else { "test" }.to_string(),
        ];
        row.extend(norm.apply(&bar.forecast_features()).iter().map(f64::to_string));
        row.extend([bar.ma20, bar.ma60, bar.vol20].iter().map(f64::to_string));
        row.push(label.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<feature dump>", e))?;
    Ok(())
}
