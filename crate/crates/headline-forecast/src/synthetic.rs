//! Deterministic synthetic data: market CSVs, headline corpora, and a
//! planted-signal market whose next-day log return is a function of each
//! day's headline embedding. Everything is seeded, so examples and tests
//! reproduce exactly.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{MarketRow, MarketSeries};
use crate::embed::embed_offline;
use crate::error::{Error, Result};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// `count` weekdays starting at `start` (weekends skipped, holidays not
/// modeled).
pub fn trading_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut days = Vec::with_capacity(count);
    let mut d = start;
    while days.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            days.push(d);
        }
        d = d.succ_opt().expect("date overflow");
    }
    days
}

/// A coherent little market: an equity with OHLCV on a geometric walk, a
/// range-bound dollar index whose high/low hug its open (so correlation
/// pruning has something to drop), and two slow-moving yield series.
pub struct SyntheticMarket {
    pub equity: MarketSeries,
    pub dollar_index: MarketSeries,
    pub yields: MarketSeries,
}

pub fn gen_market(days: &[NaiveDate], seed: u64) -> SyntheticMarket {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut close = 100.0;
    let mut dxy = 95.0;
    let mut y3m = 2.0;
    let mut y10y = 4.0;
    let mut equity_rows = Vec::with_capacity(days.len());
    let mut dxy_rows = Vec::with_capacity(days.len());
    let mut yield_rows = Vec::with_capacity(days.len());

    for &date in days {
        let ret = 0.0002 + 0.012 * normal(&mut rng);
        let prev = close;
        close *= ret.exp();
        let open = prev * (1.0 + 0.002 * normal(&mut rng));
        let spread = close.max(open) * 0.004 * (1.0 + rng.gen_range(0.0..1.0));
        let high = close.max(open) + spread;
        let low = (close.min(open) - spread).max(1.0);
        let volume = (5_000_000.0 * (1.0 + 0.3 * normal(&mut rng)).max(0.1)).round();
        equity_rows.push(MarketRow {
            date,
            values: vec![open, high, low, close, volume],
        });

        // Mean-reverting index; high/low stay glued to the open.
        dxy += 0.05 * (95.0 - dxy) + 0.3 * normal(&mut rng);
        let dxy_open = dxy;
        dxy_rows.push(MarketRow {
            date,
            values: vec![
                dxy_open,
                dxy_open + 0.2 + 0.02 * normal(&mut rng),
                dxy_open - 0.2 + 0.02 * normal(&mut rng),
                dxy_open + 0.05 * normal(&mut rng),
            ],
        });

        y3m = (y3m + 0.01 * normal(&mut rng)).clamp(0.1, 8.0);
        y10y = (y10y + 0.01 * normal(&mut rng)).clamp(0.5, 10.0);
        yield_rows.push(MarketRow {
            date,
            values: vec![y3m, y10y],
        });
    }

    SyntheticMarket {
        equity: MarketSeries {
            name: "SPY".into(),
            fields: ["open", "high", "low", "close", "volume"]
                .map(String::from)
                .to_vec(),
            rows: equity_rows,
        },
        dollar_index: MarketSeries {
            name: "DXY".into(),
            fields: ["open", "high", "low", "close"].map(String::from).to_vec(),
            rows: dxy_rows,
        },
        yields: MarketSeries {
            name: "YIELDS".into(),
            fields: ["y3m", "y10y"].map(String::from).to_vec(),
            rows: yield_rows,
        },
    }
}

const TOPICS: [&str; 12] = [
    "rates", "earnings", "oil", "jobs", "inflation", "mergers", "tariffs", "housing", "chips",
    "banks", "retail", "currencies",
];
const MOVES: [&str; 8] = [
    "surge", "slip", "rally", "stall", "rebound", "tumble", "drift higher", "hold steady",
];
const CATEGORIES: [&str; 6] = ["finance", "business", "markets", "economy", "sports", "arts"];

/// 0 to 3 headlines per day over a mix of relevant and irrelevant
/// categories; most days get at least one whitelisted headline.
pub fn gen_headlines(days: &[NaiveDate], seed: u64) -> Vec<(NaiveDate, String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &date in days {
        let n = rng.gen_range(0..=3);
        for k in 0..n {
            let category = CATEGORIES[rng.gen_range(0..CATEGORIES.len())];
            let topic = TOPICS[rng.gen_range(0..TOPICS.len())];
            let verb = MOVES[rng.gen_range(0..MOVES.len())];
            let text = format!("{topic} {verb} as traders weigh outlook ({date} #{k})");
            out.push((date, category.to_string(), text));
        }
    }
    out
}

/// One guaranteed whitelisted headline per day (selection becomes forced),
/// plus the market whose next-day log return is
/// `gain * dot(u, embedding(headline)) + noise`, where `u` is a fixed
/// random unit direction in embedding space.
pub struct PlantedUplift {
    pub headlines: Vec<(NaiveDate, String, String)>,
    pub equity: MarketSeries,
    /// The per-day planted signal values, for inspection.
    pub signal: Vec<f64>,
}

pub fn gen_planted_uplift(
    days: &[NaiveDate],
    model_id: &str,
    dim: usize,
    embed_seed: u64,
    gain: f64,
    noise: f64,
    seed: u64,
) -> PlantedUplift {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut direction: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut direction {
        *v /= norm;
    }

    let mut headlines = Vec::with_capacity(days.len());
    let mut signal = Vec::with_capacity(days.len());
    for (i, &date) in days.iter().enumerate() {
        let text = format!("planted market driver {i} for {date}");
        let embedding = embed_offline(&text, model_id, dim, embed_seed);
        signal.push(
            direction
                .iter()
                .zip(&embedding.values)
                .map(|(u, e)| u * e)
                .sum::<f64>(),
        );
        headlines.push((date, "finance".to_string(), text));
    }

    let mut close = 100.0;
    let mut rows = Vec::with_capacity(days.len());
    for (i, &date) in days.iter().enumerate() {
        let open = close * (1.0 + 0.001 * normal(&mut rng));
        let volume = (3_000_000.0 * (1.0 + 0.2 * normal(&mut rng)).max(0.1)).round();
        rows.push(MarketRow {
            date,
            values: vec![open, close, volume],
        });
        // Today's headline drives tomorrow's return.
        let r = gain * signal[i] + noise * normal(&mut rng);
        close *= r.exp();
    }

    PlantedUplift {
        headlines,
        equity: MarketSeries {
            name: "SPY".into(),
            fields: ["open", "close", "volume"].map(String::from).to_vec(),
            rows,
        },
        signal,
    }
}

/// Write a market series as the CSV layout the loader expects.
pub fn write_market_csv(path: &Path, series: &MarketSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let mut header = vec!["date".to_string()];
    header.extend(series.fields.clone());
    w.write_record(&header)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for row in &series.rows {
        let mut record = vec![row.date.to_string()];
        record.extend(row.values.iter().map(|v| format!("{v}")));
        w.write_record(&record)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct HeadlineOut<'a> {
    date: NaiveDate,
    category: &'a str,
    text: &'a str,
}

/// Write headlines as the JSON array layout the loader expects.
pub fn write_headlines_json(path: &Path, headlines: &[(NaiveDate, String, String)]) -> Result<()> {
    let out: Vec<HeadlineOut> = headlines
        .iter()
        .map(|(date, category, text)| HeadlineOut {
            date: *date,
            category,
            text,
        })
        .collect();
    let body = serde_json::to_string_pretty(&out)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    std::fs::write(path, body)?;
    Ok(())
}

/// Group generated headlines by day.
pub fn headlines_by_day(
    headlines: &[(NaiveDate, String, String)],
) -> BTreeMap<NaiveDate, Vec<(String, String)>> {
    let mut map: BTreeMap<NaiveDate, Vec<(String, String)>> = BTreeMap::new();
    for (date, category, text) in headlines {
        map.entry(*date)
            .or_default()
            .push((category.clone(), text.clone()));
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trading_days_skip_weekends() {
        let start = NaiveDate::from_ymd_opt(2004, 1, 1).unwrap(); // Thursday
        let days = trading_days(start, 10);
        assert_eq!(days.len(), 10);
        assert!(days
            .iter()
            .all(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)));
        for w in days.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn market_is_deterministic_and_positive() {
        let days = trading_days(NaiveDate::from_ymd_opt(2004, 1, 1).unwrap(), 100);
        let a = gen_market(&days, 7);
        let b = gen_market(&days, 7);
        assert_eq!(a.equity.rows[50].values, b.equity.rows[50].values);
        assert!(a
            .equity
            .rows
            .iter()
            .all(|r| r.values.iter().all(|v| v.is_finite() && *v > 0.0)));
    }

    #[test]
    fn planted_market_encodes_the_signal() {
        let days = trading_days(NaiveDate::from_ymd_opt(2004, 1, 1).unwrap(), 60);
        let planted = gen_planted_uplift(&days, "small", 16, 3, 0.3, 0.0, 5);
        // With zero noise the log return equals gain * signal exactly.
        let close_idx = 1;
        for t in 0..days.len() - 1 {
            let r = (planted.equity.rows[t + 1].values[close_idx]
                / planted.equity.rows[t].values[close_idx])
                .ln();
            assert!((r - 0.3 * planted.signal[t]).abs() < 1e-12);
        }
        assert_eq!(planted.headlines.len(), days.len());
    }
}
