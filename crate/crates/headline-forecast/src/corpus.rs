//! Headline and market data loading, filtering and calendar alignment.
//!
//! Headlines arrive as a JSON array or JSON-lines file of
//! `{date, category, text}` objects. Market data arrives as CSV with a
//! leading `date` column. All series are inner-joined onto the anchor
//! instrument's trading calendar; consecutive rows are treated as adjacent
//! regardless of calendar gaps, so weekends and holidays carry no special
//! feature.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::hash;

// ---------------------------------------------------------------------------
// Headlines
// ---------------------------------------------------------------------------

/// One dated, categorized headline with a stable content hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadlineRecord {
    pub id: u64,
    pub date: NaiveDate,
    pub category: String,
    pub text: String,
}

/// Stable 64-bit id of a headline: FNV-1a over the ISO date and the
/// NFC-normalized, whitespace-trimmed text. Independent of file order and
/// category, so identical (date, text) pairs always collide.
pub fn headline_id(date: NaiveDate, text: &str) -> u64 {
    let canonical: String = text.trim().nfc().collect();
    let mut h = hash::fnv1a(date.to_string().as_bytes());
    h = hash::fnv1a_extend(h, b"\n");
    hash::fnv1a_extend(h, canonical.as_bytes())
}

#[derive(Debug, Deserialize)]
struct RawHeadline {
    date: NaiveDate,
    category: String,
    text: String,
}

/// Load headlines, keep those whose category is whitelisted, assign ids,
/// sort by (date, id) and drop duplicate ids.
///
/// Category matching is case-insensitive. The file may be a single JSON
/// array or one JSON object per line.
pub fn load_headlines(path: &Path, whitelist: &BTreeSet<String>) -> Result<Vec<HeadlineRecord>> {
    if whitelist.is_empty() {
        return Err(Error::Config("empty headline category whitelist".into()));
    }
    let whitelist: BTreeSet<String> = whitelist.iter().map(|c| c.to_lowercase()).collect();

    let raw = load_raw_headlines(path)?;
    let mut records = Vec::new();
    for (idx, r) in raw.into_iter().enumerate() {
        let text = r.text.trim();
        if text.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                detail: format!("record {idx}: empty headline text"),
            });
        }
        if !whitelist.contains(&r.category.to_lowercase()) {
            continue;
        }
        records.push(HeadlineRecord {
            id: headline_id(r.date, text),
            date: r.date,
            category: r.category,
            text: text.to_string(),
        });
    }

    records.sort_by(|a, b| a.date.cmp(&b.date).then(a.id.cmp(&b.id)));
    records.dedup_by_key(|r| r.id);
    Ok(records)
}

fn load_raw_headlines(path: &Path) -> Result<Vec<RawHeadline>> {
    let content = fs::read_to_string(path)?;
    if content.trim_start().starts_with('[') {
        serde_json::from_str(&content).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            detail: format!("headline array: {e}"),
        })
    } else {
        let mut out = Vec::new();
        for (lineno, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: RawHeadline = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                detail: format!("line {}: {e}", lineno + 1),
            })?;
            out.push(r);
        }
        Ok(out)
    }
}

/// Pick one headline for a day, uniformly over that day's candidates, from
/// a stream seeded by (seed, date). Absent when the day has no candidates.
pub fn select_daily_headline(
    records: &[HeadlineRecord],
    date: NaiveDate,
    rng_seed: u64,
) -> Option<&HeadlineRecord> {
    let start = records.partition_point(|r| r.date < date);
    let end = records.partition_point(|r| r.date <= date);
    let candidates = &records[start..end];
    if candidates.is_empty() {
        return None;
    }
    let seed = hash::derive_seed(rng_seed, &date.to_string());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Some(&candidates[rng.gen_range(0..candidates.len())])
}

// ---------------------------------------------------------------------------
// Market series
// ---------------------------------------------------------------------------

/// One market data file: named numeric fields over strictly increasing dates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketSeries {
    pub name: String,
    pub fields: Vec<String>,
    pub rows: Vec<MarketRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketRow {
    pub date: NaiveDate,
    pub values: Vec<f64>,
}

impl MarketSeries {
    pub fn field_index(&self, field: &str) -> Option<usize> {
        self.fields.iter().position(|f| f == field)
    }

    fn date_set(&self) -> BTreeSet<NaiveDate> {
        self.rows.iter().map(|r| r.date).collect()
    }

    fn value_at(&self, date: NaiveDate, field_idx: usize) -> Option<f64> {
        let i = self.rows.partition_point(|r| r.date < date);
        let row = self.rows.get(i)?;
        (row.date == date).then(|| row.values[field_idx])
    }
}

/// Expected layout of a market CSV: series name plus the columns the file
/// must provide (beyond the leading date column).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketSchema {
    pub name: String,
    pub columns: Vec<String>,
}

/// Load a market CSV against a declared schema.
///
/// The header's first column is the date; every schema column must be
/// present (extra file columns are ignored). Rows come out sorted by date;
/// duplicate dates and non-numeric or non-finite cells are hard errors.
pub fn load_market_csv(path: &Path, schema: &MarketSchema) -> Result<MarketSeries> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            detail: format!("header: {e}"),
        })?
        .clone();
    if headers.is_empty() {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            detail: "empty header row".into(),
        });
    }
    let mut col_idx = Vec::with_capacity(schema.columns.len());
    for col in &schema.columns {
        match headers.iter().position(|h| h == col) {
            Some(0) => {
                return Err(Error::Schema {
                    path: path.to_path_buf(),
                    detail: format!("column {col} collides with the date column"),
                })
            }
            Some(i) => col_idx.push(i),
            None => {
                return Err(Error::Schema {
                    path: path.to_path_buf(),
                    detail: format!("missing column {col}"),
                })
            }
        }
    }

    let mut rows = Vec::new();
    for (recno, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            detail: format!("row {}: {e}", recno + 1),
        })?;
        let date_cell = record.get(0).unwrap_or("");
        let date = NaiveDate::parse_from_str(date_cell, "%Y-%m-%d").map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            detail: format!("row {}: bad date {date_cell:?}", recno + 1),
        })?;
        let mut values = Vec::with_capacity(col_idx.len());
        for (&i, col) in col_idx.iter().zip(&schema.columns) {
            let cell = record.get(i).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                detail: format!("row {}, column {col}: non-numeric cell {cell:?}", recno + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    detail: format!("row {}, column {col}: non-finite value", recno + 1),
                });
            }
            values.push(v);
        }
        rows.push(MarketRow { date, values });
    }

    rows.sort_by_key(|r| r.date);
    for w in rows.windows(2) {
        if w[0].date == w[1].date {
            return Err(Error::DuplicateDate {
                path: path.to_path_buf(),
                date: w[0].date.to_string(),
            });
        }
    }
    Ok(MarketSeries {
        name: schema.name.clone(),
        fields: schema.columns.clone(),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Calendar alignment
// ---------------------------------------------------------------------------

/// A market series paired with its feature selection: which of its fields
/// enter the frame and whether they get z-scored with train statistics.
#[derive(Debug, Clone)]
pub struct SourceSeries {
    pub series: MarketSeries,
    pub select: Vec<String>,
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub source: String,
    pub normalize: bool,
    /// Set by correlation pruning; carries the drop reason.
    pub dropped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
    pub meta: ColumnMeta,
}

/// Statistics recorded when a frame is normalized, for leakage auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizeInfo {
    pub range: (NaiveDate, NaiveDate),
    /// (column, train mean, train std) per transformed column.
    pub stats: Vec<(String, f64, f64)>,
}

/// Date-indexed feature matrix after the calendar inner join.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedFrame {
    pub dates: Vec<NaiveDate>,
    pub columns: Vec<Column>,
    /// Raw (never normalized) anchor target series, one value per date.
    pub target: Vec<f64>,
    pub target_name: String,
    pub normalize_info: Option<NormalizeInfo>,
    /// Train range used for correlation pruning, when applied.
    pub prune_range: Option<(NaiveDate, NaiveDate)>,
}

impl AlignedFrame {
    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Columns that survived pruning.
    pub fn active_columns(&self) -> Vec<&Column> {
        self.columns.iter().filter(|c| c.meta.dropped.is_none()).collect()
    }

    /// Row indices whose date falls in the inclusive range.
    pub fn rows_in_range(&self, start: NaiveDate, end: NaiveDate) -> Vec<usize> {
        self.dates
            .iter()
            .enumerate()
            .filter(|(_, d)| **d >= start && **d <= end)
            .map(|(i, _)| i)
            .collect()
    }
}

fn column_name(series_name: &str, field: &str) -> String {
    if series_name.is_empty() {
        field.to_string()
    } else {
        format!("{series_name}_{field}")
    }
}

/// Inner-join all sources onto the anchor's calendar.
///
/// Frame dates are the anchor dates present in every other series; columns
/// are each source's selected fields. The anchor's `target_column` is kept
/// raw alongside the features as the prediction target.
pub fn align_calendar(
    anchor: &SourceSeries,
    target_column: &str,
    others: &[SourceSeries],
) -> Result<AlignedFrame> {
    if anchor.series.rows.is_empty() {
        return Err(Error::Alignment(format!(
            "anchor series {} is empty",
            anchor.series.name
        )));
    }
    let target_idx = anchor.series.field_index(target_column).ok_or_else(|| {
        Error::Alignment(format!(
            "target column {target_column} not in anchor series {}",
            anchor.series.name
        ))
    })?;

    let mut dates: Vec<NaiveDate> = anchor.series.rows.iter().map(|r| r.date).collect();
    for src in others {
        let theirs = src.series.date_set();
        dates.retain(|d| theirs.contains(d));
        if dates.is_empty() {
            return Err(Error::Alignment(format!(
                "no dates remain after joining {}; it shares no days with the anchor",
                src.series.name
            )));
        }
    }

    let mut columns = Vec::new();
    for src in std::iter::once(anchor).chain(others) {
        for field in &src.select {
            let idx = src.series.field_index(field).ok_or_else(|| {
                Error::Alignment(format!(
                    "selected column {field} not in series {}",
                    src.series.name
                ))
            })?;
            let mut values = Vec::with_capacity(dates.len());
            for &d in &dates {
                // Present by construction of the date intersection.
                values.push(src.series.value_at(d, idx).expect("joined date"));
            }
            columns.push(Column {
                name: column_name(&src.series.name, field),
                values,
                meta: ColumnMeta {
                    source: src.series.name.clone(),
                    normalize: src.normalize,
                    dropped: None,
                },
            });
        }
    }

    let target: Vec<f64> = dates
        .iter()
        .map(|&d| anchor.series.value_at(d, target_idx).expect("anchor date"))
        .collect();

    Ok(AlignedFrame {
        target_name: column_name(&anchor.series.name, target_column),
        dates,
        columns,
        target,
        normalize_info: None,
        prune_range: None,
    })
}

/// Reinterpret a frame as a market series (used to check join idempotence
/// and to feed derived frames back through alignment).
pub fn frame_as_series(frame: &AlignedFrame, name: &str) -> MarketSeries {
    let fields: Vec<String> = frame.columns.iter().map(|c| c.name.clone()).collect();
    let rows = frame
        .dates
        .iter()
        .enumerate()
        .map(|(i, &date)| MarketRow {
            date,
            values: frame.columns.iter().map(|c| c.values[i]).collect(),
        })
        .collect();
    MarketSeries {
        name: name.to_string(),
        fields,
        rows,
    }
}

/// Per-day candidate headline counts, a corpus summary convenience.
pub fn headlines_per_day(records: &[HeadlineRecord]) -> BTreeMap<NaiveDate, usize> {
    let mut map = BTreeMap::new();
    for r in records {
        *map.entry(r.date).or_insert(0) += 1;
    }
    map
}
