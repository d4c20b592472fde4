//! Feature engineering: return transforms, correlation pruning,
//! train-statistic normalization, and dataset-variant assembly.
//!
//! Everything that fits a statistic (correlations, means, PCA bases) fits
//! it on the training date range only and applies it everywhere else; the
//! ranges used are recorded so a leakage audit can re-check them later.

mod variant;

pub use variant::{
    audit_leakage, build_variant, kfold_split, DatasetVariant, EmbeddingVariant, Projection,
    Splits, VariantConfig, VariantProvenance,
};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::{AlignedFrame, NormalizeInfo};
use crate::error::{Error, Result};

/// The three temporal treatments of the target series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransformKind {
    /// Raw sequence order preserved; target is the normalized next close.
    #[serde(alias = "TIME_DEPENDENT")]
    TimeDependent,
    /// Target is ln(close_{t+h} / close_t); rows may be shuffled.
    #[serde(alias = "LOG_RETURN")]
    LogReturn,
    /// Target is close_{t+h} - close_t; rows may be shuffled.
    #[serde(alias = "LINEAR_DIFF")]
    LinearDiff,
}

impl TransformKind {
    pub const ALL: [TransformKind; 3] = [
        TransformKind::TimeDependent,
        TransformKind::LogReturn,
        TransformKind::LinearDiff,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TransformKind::TimeDependent => "TIME_DEPENDENT",
            TransformKind::LogReturn => "LOG_RETURN",
            TransformKind::LinearDiff => "LINEAR_DIFF",
        }
    }

    /// Sequence order is preserved only for the time-dependent transform.
    pub fn shuffle_train(&self) -> bool {
        !matches!(self, TransformKind::TimeDependent)
    }
}

impl std::fmt::Display for TransformKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_uppercase().as_str() {
            "TIME_DEPENDENT" => Ok(TransformKind::TimeDependent),
            "LOG_RETURN" => Ok(TransformKind::LogReturn),
            "LINEAR_DIFF" => Ok(TransformKind::LinearDiff),
            other => Err(Error::Param(format!("unknown transform {other:?}"))),
        }
    }
}

/// ln(p_t / p_prev). Both prices must be positive.
pub fn log_return(p_prev: f64, p_t: f64) -> Result<f64> {
    if p_prev <= 0.0 || p_t <= 0.0 {
        return Err(Error::Numeric(format!(
            "log return needs positive prices, got {p_prev} -> {p_t}"
        )));
    }
    Ok((p_t / p_prev).ln())
}

/// p_t - p_prev.
pub fn linear_diff(p_prev: f64, p_t: f64) -> f64 {
    p_t - p_prev
}

/// Date splits for train / test / holdout, assigned by anchor date.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_end: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
    pub holdout_start: NaiveDate,
    pub holdout_end: NaiveDate,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).unwrap();
        SplitConfig {
            train_end: d(2015, 12, 31),
            test_start: d(2016, 1, 1),
            test_end: d(2019, 12, 31),
            holdout_start: d(2020, 1, 1),
            holdout_end: d(2021, 12, 31),
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_end >= self.test_start
            || self.test_start > self.test_end
            || self.test_end >= self.holdout_start
            || self.holdout_start > self.holdout_end
        {
            return Err(Error::Config(format!(
                "split ranges must be ordered: train..={}, test {}..={}, holdout {}..={}",
                self.train_end, self.test_start, self.test_end, self.holdout_start, self.holdout_end
            )));
        }
        Ok(())
    }

    /// Train range as (earliest representable, train_end).
    pub fn train_range(&self) -> (NaiveDate, NaiveDate) {
        (NaiveDate::MIN, self.train_end)
    }
}

/// One column removed by correlation pruning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedColumn {
    pub column: String,
    /// Earlier-declared column it correlated with.
    pub partner: String,
    pub correlation: f64,
}

/// What pruning did and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub threshold: f64,
    pub dropped: Vec<PrunedColumn>,
    /// Columns dropped for having no variance on the train range; these are
    /// not correlation drops and carry no partner.
    pub zero_variance: Vec<String>,
    pub train_range: (NaiveDate, NaiveDate),
}

// Variance below this, on train rows, counts as constant. Catches exact
// constants despite float summation residue while staying far below any
// real feature's variance.
const ZERO_VARIANCE_EPS: f64 = 1e-24;

/// Drop later-declared columns whose absolute Pearson correlation with any
/// retained earlier column exceeds `threshold`. Correlations are computed
/// on the training range only; each pair is considered once (the scan walks
/// one triangle of the correlation matrix).
pub fn prune_correlated(
    frame: &AlignedFrame,
    threshold: f64,
    train_range: (NaiveDate, NaiveDate),
) -> Result<(AlignedFrame, PruneReport)> {
    if frame.columns.len() < 2 {
        return Err(Error::Param("pruning needs at least 2 columns".into()));
    }
    let rows = frame.rows_in_range(train_range.0, train_range.1);
    if rows.len() < 2 {
        return Err(Error::NoData(format!(
            "fewer than 2 training rows in {:?}..{:?}",
            train_range.0, train_range.1
        )));
    }

    let mut out = frame.clone();
    let mut report = PruneReport {
        threshold,
        dropped: Vec::new(),
        zero_variance: Vec::new(),
        train_range,
    };

    // Train-range mean/std per column; constants go first.
    let n = rows.len() as f64;
    let mut stats = Vec::with_capacity(out.columns.len());
    for col in &mut out.columns {
        let vals: Vec<f64> = rows.iter().map(|&r| col.values[r]).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        if var <= ZERO_VARIANCE_EPS && col.meta.dropped.is_none() {
            col.meta.dropped = Some("zero variance".into());
            report.zero_variance.push(col.name.clone());
        }
        stats.push((vals, mean, var.sqrt()));
    }

    // One-triangle scan in declared order: j against every retained i < j.
    for j in 0..out.columns.len() {
        if out.columns[j].meta.dropped.is_some() {
            continue;
        }
        for i in 0..j {
            if out.columns[i].meta.dropped.is_some() {
                continue;
            }
            let (vi, mi, si) = (&stats[i].0, stats[i].1, stats[i].2);
            let (vj, mj, sj) = (&stats[j].0, stats[j].1, stats[j].2);
            let cov: f64 = vi
                .iter()
                .zip(vj)
                .map(|(a, b)| (a - mi) * (b - mj))
                .sum::<f64>()
                / (n - 1.0);
            let corr = cov / (si * sj);
            if corr.abs() > threshold {
                let name = out.columns[j].name.clone();
                let partner = out.columns[i].name.clone();
                out.columns[j].meta.dropped =
                    Some(format!("|corr| {:.4} with {partner} above {threshold}", corr.abs()));
                report.dropped.push(PrunedColumn {
                    column: name,
                    partner,
                    correlation: corr,
                });
                break;
            }
        }
    }

    out.prune_range = Some(train_range);
    Ok((out, report))
}

/// Z-score every normalize-flagged surviving column with its training-range
/// mean and standard deviation; test and holdout rows get the train
/// statistics, never their own.
pub fn normalize_with_train_stats(
    frame: &AlignedFrame,
    train_range: (NaiveDate, NaiveDate),
) -> Result<AlignedFrame> {
    let rows = frame.rows_in_range(train_range.0, train_range.1);
    if rows.len() < 2 {
        return Err(Error::NoData(format!(
            "fewer than 2 training rows in {:?}..{:?}",
            train_range.0, train_range.1
        )));
    }
    let n = rows.len() as f64;
    let mut out = frame.clone();
    let mut stats = Vec::new();
    for col in &mut out.columns {
        if !col.meta.normalize || col.meta.dropped.is_some() {
            continue;
        }
        let mean = rows.iter().map(|&r| col.values[r]).sum::<f64>() / n;
        let var = rows
            .iter()
            .map(|&r| {
                let d = col.values[r] - mean;
                d * d
            })
            .sum::<f64>()
            / (n - 1.0);
        let std = var.sqrt();
        if std == 0.0 {
            return Err(Error::Numeric(format!(
                "column {} has zero train variance, cannot normalize",
                col.name
            )));
        }
        for v in &mut col.values {
            *v = (*v - mean) / std;
        }
        stats.push((col.name.clone(), mean, std));
    }
    out.normalize_info = Some(NormalizeInfo {
        range: train_range,
        stats,
    });
    Ok(out)
}

/// Build a frame directly from named columns over consecutive days; the
/// first column doubles as the raw target. Test support.
#[cfg(test)]
pub(crate) fn frame_from_columns(cols: Vec<(&str, Vec<f64>, bool)>) -> AlignedFrame {
    use crate::corpus::{Column, ColumnMeta};
    let len = cols[0].1.len();
    let base = NaiveDate::from_ymd_opt(2001, 1, 1).unwrap();
    let dates: Vec<NaiveDate> = (0..len)
        .map(|i| base + chrono::Days::new(i as u64))
        .collect();
    let target = cols[0].1.clone();
    AlignedFrame {
        dates,
        columns: cols
            .into_iter()
            .map(|(name, values, normalize)| Column {
                name: name.into(),
                values,
                meta: ColumnMeta {
                    source: "test".into(),
                    normalize,
                    dropped: None,
                },
            })
            .collect(),
        target,
        target_name: "close".into(),
        normalize_info: None,
        prune_range: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn full_range(frame: &AlignedFrame) -> (NaiveDate, NaiveDate) {
        (frame.dates[0], *frame.dates.last().unwrap())
    }

    // ln(1.1) via the atanh series 2*(z + z^3/3 + z^5/5 + ...) with
    // z = (x-1)/(x+1) = 1/21, independent of the std library ln.
    fn ln_oracle(x: f64) -> f64 {
        let z = (x - 1.0) / (x + 1.0);
        let mut term = z;
        let mut acc = 0.0;
        let mut k = 1.0;
        while term.abs() > 1e-20 {
            acc += term / k;
            term *= z * z;
            k += 2.0;
        }
        2.0 * acc
    }

    #[test]
    fn log_return_values_and_round_trip() {
        assert_eq!(log_return(100.0, 100.0).unwrap(), 0.0);
        let lr = log_return(100.0, 110.0).unwrap();
        assert!((lr - ln_oracle(1.1)).abs() < 1e-15);
        assert!((lr - 0.0953102).abs() < 1e-7);
        assert!(log_return(0.0, 1.0).is_err());
        assert!(log_return(1.0, -2.0).is_err());

        for (a, b) in [(100.0, 110.0), (3.5, 0.7), (250.0, 249.0)] {
            let lr = log_return(a, b).unwrap();
            assert!((a * lr.exp() - b).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_diff_values_and_antisymmetry() {
        assert_eq!(linear_diff(100.0, 100.0), 0.0);
        assert_eq!(linear_diff(100.0, 110.0), 10.0);
        assert_eq!(linear_diff(3.0, 8.5), -linear_diff(8.5, 3.0));
    }

    #[test]
    fn prune_drops_exact_multiple() {
        let a: Vec<f64> = (0..50).map(|i| i as f64 + 1.0).collect();
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let frame = frame_from_columns(vec![("A", a, true), ("B", b, true)]);
        let range = full_range(&frame);
        let (pruned, report) = prune_correlated(&frame, 0.95, range).unwrap();
        assert_eq!(report.dropped.len(), 1);
        assert_eq!(report.dropped[0].column, "B");
        assert_eq!(report.dropped[0].partner, "A");
        assert!((report.dropped[0].correlation - 1.0).abs() < 1e-9);
        assert!(pruned.column("A").unwrap().meta.dropped.is_none());
        assert!(pruned.column("B").unwrap().meta.dropped.is_some());
    }

    #[test]
    fn prune_open_high_low_keeps_first_declared() {
        // High and low both track open closely; both must drop with the
        // earlier-declared open as partner.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let open: Vec<f64> = (0..400).map(|i| 90.0 + (i as f64) * 0.05 + rng.gen_range(-0.2..0.2)).collect();
        let high: Vec<f64> = open.iter().map(|v| v + 0.3 + rng.gen_range(-0.01..0.01)).collect();
        let low: Vec<f64> = open.iter().map(|v| v - 0.3 + rng.gen_range(-0.01..0.01)).collect();
        let frame = frame_from_columns(vec![
            ("DXY_open", open, false),
            ("DXY_high", high, false),
            ("DXY_low", low, false),
        ]);
        let range = full_range(&frame);
        let (_, report) = prune_correlated(&frame, 0.95, range).unwrap();
        let dropped: Vec<&str> = report.dropped.iter().map(|d| d.column.as_str()).collect();
        assert_eq!(dropped, vec!["DXY_high", "DXY_low"]);
        assert!(report.dropped.iter().all(|d| d.partner == "DXY_open"));
        assert!(report.dropped.iter().all(|d| d.correlation.abs() > 0.95));
    }

    #[test]
    fn prune_leaves_independent_columns_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cols: Vec<(String, Vec<f64>)> = (0..5)
            .map(|i| {
                let v: Vec<f64> = (0..5000).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (format!("C{i}"), v)
            })
            .collect();
        let frame = frame_from_columns(
            cols.iter()
                .map(|(n, v)| (n.as_str(), v.clone(), false))
                .collect(),
        );
        let range = full_range(&frame);
        let (_, report) = prune_correlated(&frame, 0.95, range).unwrap();
        assert!(report.dropped.is_empty());
        assert!(report.zero_variance.is_empty());
    }

    #[test]
    fn prune_flags_constant_column_separately() {
        let a: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let frame = frame_from_columns(vec![("A", a, true), ("K", vec![7.0; 30], false)]);
        let range = full_range(&frame);
        let (pruned, report) = prune_correlated(&frame, 0.95, range).unwrap();
        assert_eq!(report.zero_variance, vec!["K".to_string()]);
        assert!(report.dropped.is_empty());
        assert_eq!(
            pruned.column("K").unwrap().meta.dropped.as_deref(),
            Some("zero variance")
        );
    }

    #[test]
    fn prune_uses_train_range_only() {
        // Perfectly correlated on the train half, independent on the rest:
        // still a drop, because only the train range is examined.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100;
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = a
            .iter()
            .enumerate()
            .map(|(i, v)| if i < 50 { *v } else { rng.gen_range(-1.0..1.0) })
            .collect();
        let frame = frame_from_columns(vec![("A", a, false), ("B", b, false)]);
        let train = (frame.dates[0], frame.dates[49]);
        let (_, report) = prune_correlated(&frame, 0.95, train).unwrap();
        assert_eq!(report.dropped.len(), 1);
        assert_eq!(report.train_range, train);
    }

    #[test]
    fn normalize_flagged_columns_with_train_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 200;
        // Train half centered near 5, later half drifted to 9.
        let vals: Vec<f64> = (0..n)
            .map(|i| if i < 120 { 5.0 } else { 9.0 } + rng.gen_range(-1.0..1.0))
            .collect();
        let passthrough: Vec<f64> = (0..n).map(|i| 90.0 + (i % 7) as f64).collect();
        let frame = frame_from_columns(vec![
            ("SPY_close", vals, true),
            ("DXY_open", passthrough.clone(), false),
        ]);
        let train = (frame.dates[0], frame.dates[119]);
        let out = normalize_with_train_stats(&frame, train).unwrap();

        let col = out.column("SPY_close").unwrap();
        let train_vals = &col.values[..120];
        let mean: f64 = train_vals.iter().sum::<f64>() / 120.0;
        let var: f64 =
            train_vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 119.0;
        assert!(mean.abs() < 1e-9, "train mean {mean}");
        assert!((var.sqrt() - 1.0).abs() < 1e-9, "train std {}", var.sqrt());

        // Drifted test rows keep a visibly non-zero mean under train stats.
        let test_mean: f64 = col.values[120..].iter().sum::<f64>() / 80.0;
        assert!(test_mean > 1.0, "test mean {test_mean}");

        // Unflagged column is bitwise unchanged.
        assert_eq!(out.column("DXY_open").unwrap().values, passthrough);

        let info = out.normalize_info.as_ref().unwrap();
        assert_eq!(info.range, train);
        assert_eq!(info.stats.len(), 1);
    }

    #[test]
    fn normalize_errors_on_constant_flagged_column() {
        let frame = frame_from_columns(vec![("A", vec![3.0; 10], true)]);
        let range = full_range(&frame);
        let err = normalize_with_train_stats(&frame, range).unwrap_err();
        assert!(err.to_string().contains('A'), "{err}");
    }

    #[test]
    fn transform_names_round_trip() {
        for t in TransformKind::ALL {
            assert_eq!(t.as_str().parse::<TransformKind>().unwrap(), t);
        }
        assert!("bogus".parse::<TransformKind>().is_err());
        assert!(!TransformKind::TimeDependent.shuffle_train());
        assert!(TransformKind::LogReturn.shuffle_train());
        assert!(TransformKind::LinearDiff.shuffle_train());
    }
}
