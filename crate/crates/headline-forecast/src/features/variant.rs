//! Dataset variants: windowed tensors over the aligned frame, one per
//! (transform, embedding) combination, with leakage-safe date splits.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::AlignedFrame;
use crate::embed::EmbeddingVector;
use crate::error::{Error, Result};
use crate::pca::{self, PcaModel};

use super::{linear_diff, log_return, SplitConfig, TransformKind};

/// How a headline embedding enters the feature rows.
#[derive(Debug, Clone)]
pub enum Projection {
    /// Project through a fitted PCA basis.
    Pca(PcaModel),
    /// Pass the raw vector through unchanged (the no-PCA configuration).
    Native { dim: usize },
}

/// The embedding side of a variant: which model, how projected, and what
/// date range the projection was fitted on.
#[derive(Debug, Clone)]
pub struct EmbeddingVariant {
    pub model_id: String,
    pub projection: Projection,
    /// PCA fitting dates; `None` for native passthrough.
    pub fit_range: Option<(NaiveDate, NaiveDate)>,
}

impl EmbeddingVariant {
    pub fn dim(&self) -> usize {
        match &self.projection {
            Projection::Pca(model) => model.k(),
            Projection::Native { dim } => *dim,
        }
    }

    pub fn dim_label(&self) -> String {
        match &self.projection {
            Projection::Pca(model) => model.k().to_string(),
            Projection::Native { .. } => "native".to_string(),
        }
    }
}

/// Serializable summary of the embedding side, carried by built variants
/// and run results.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingDesc {
    pub model_id: String,
    pub dim: usize,
    pub dim_label: String,
}

#[derive(Debug, Clone, Copy)]
pub struct VariantConfig {
    pub transform: TransformKind,
    pub window: usize,
    pub horizon: usize,
    pub seed: u64,
    pub splits: SplitConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    /// Train row indices in iteration order (shuffled when the transform
    /// allows it).
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub holdout: Vec<usize>,
}

/// Date ranges every fitted statistic was computed on, for auditing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantProvenance {
    pub prune_range: Option<(NaiveDate, NaiveDate)>,
    pub normalize_range: Option<(NaiveDate, NaiveDate)>,
    pub pca_fit_range: Option<(NaiveDate, NaiveDate)>,
    pub target_stats_range: Option<(NaiveDate, NaiveDate)>,
}

/// One fully assembled dataset: X windows, targets, splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetVariant {
    pub transform: TransformKind,
    pub embedding: Option<EmbeddingDesc>,
    pub window: usize,
    pub horizon: usize,
    /// Per-day feature layout (market columns, then embedding slots).
    pub feature_names: Vec<String>,
    /// Row-major `n_rows x window x n_features`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Frame date index of each row's anchor day.
    pub anchor_index: Vec<usize>,
    /// The frame's full trading calendar.
    pub dates: Vec<NaiveDate>,
    pub splits: Splits,
    pub shuffle_train: bool,
    pub seed: u64,
    pub split_config: SplitConfig,
    /// Train-range (mean, std) of the raw target, set for the
    /// time-dependent transform.
    pub target_stats: Option<(f64, f64)>,
    pub provenance: VariantProvenance,
}

impl DatasetVariant {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// The `window x n_features` block for one row, flattened.
    pub fn row_window(&self, row: usize) -> &[f64] {
        let stride = self.window * self.n_features();
        &self.x[row * stride..(row + 1) * stride]
    }

    /// Anchor date of a row (the last day inside its window).
    pub fn date_index(&self, row: usize) -> NaiveDate {
        self.dates[self.anchor_index[row]]
    }

    /// Date the row's target is drawn from.
    pub fn target_date(&self, row: usize) -> NaiveDate {
        self.dates[self.anchor_index[row] + self.horizon]
    }
}

/// Assemble a variant from a pruned, normalized frame.
///
/// Each anchor day `t` with a full window and a target at `t + horizon`
/// becomes a row: the surviving market columns for every window day,
/// concatenated (when an embedding variant is configured) with the
/// projected embedding of that day's selected headline, or a zero vector
/// with a `has_headline` indicator of 0 when the day had none.
pub fn build_variant(
    frame: &AlignedFrame,
    embedding: Option<&EmbeddingVariant>,
    daily: &BTreeMap<NaiveDate, EmbeddingVector>,
    cfg: &VariantConfig,
) -> Result<DatasetVariant> {
    cfg.splits.validate()?;
    if cfg.window < 1 {
        return Err(Error::Param("window must be >= 1".into()));
    }
    if cfg.horizon < 1 {
        return Err(Error::Param("horizon must be >= 1".into()));
    }
    let columns = frame.active_columns();
    if columns.is_empty() {
        return Err(Error::NoData("frame has no surviving columns".into()));
    }
    let n_dates = frame.dates.len();

    // Project each day's embedding once.
    let mut projected: Vec<Option<Vec<f64>>> = vec![None; n_dates];
    if let Some(emb) = embedding {
        for (i, date) in frame.dates.iter().enumerate() {
            if let Some(vector) = daily.get(date) {
                let values = match &emb.projection {
                    Projection::Pca(model) => pca::project(model, &vector.values)?,
                    Projection::Native { dim } => {
                        if vector.values.len() != *dim {
                            return Err(Error::Param(format!(
                                "embedding for {date} has dim {}, expected {dim}",
                                vector.values.len()
                            )));
                        }
                        vector.values.clone()
                    }
                };
                projected[i] = Some(values);
            }
        }
    }

    let mut feature_names: Vec<String> = columns.iter().map(|c| c.name.clone()).collect();
    if let Some(emb) = embedding {
        for i in 0..emb.dim() {
            feature_names.push(format!("emb_{}", i));
        }
        feature_names.push("has_headline".to_string());
    }
    let n_features = feature_names.len();

    // Train statistics of the raw target for the time-dependent scale.
    let mut target_stats = None;
    let mut target_stats_range = None;
    if cfg.transform == TransformKind::TimeDependent {
        let train_rows = frame.rows_in_range(NaiveDate::MIN, cfg.splits.train_end);
        if train_rows.len() < 2 {
            return Err(Error::NoData("fewer than 2 train days for target stats".into()));
        }
        let n = train_rows.len() as f64;
        let mean = train_rows.iter().map(|&r| frame.target[r]).sum::<f64>() / n;
        let var = train_rows
            .iter()
            .map(|&r| {
                let d = frame.target[r] - mean;
                d * d
            })
            .sum::<f64>()
            / (n - 1.0);
        if var == 0.0 {
            return Err(Error::Numeric("constant target on the train range".into()));
        }
        target_stats = Some((mean, var.sqrt()));
        target_stats_range = Some((frame.dates[train_rows[0]], cfg.splits.train_end));
    }

    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut anchor_index = Vec::new();
    if n_dates > cfg.horizon {
        for t in (cfg.window - 1)..(n_dates - cfg.horizon) {
            let target = match cfg.transform {
                TransformKind::TimeDependent => {
                    let (mean, std) = target_stats.expect("stats computed above");
                    (frame.target[t + cfg.horizon] - mean) / std
                }
                TransformKind::LogReturn => {
                    log_return(frame.target[t], frame.target[t + cfg.horizon])?
                }
                TransformKind::LinearDiff => {
                    linear_diff(frame.target[t], frame.target[t + cfg.horizon])
                }
            };
            for w in 0..cfg.window {
                let day = t + 1 - cfg.window + w;
                for col in &columns {
                    x.push(col.values[day]);
                }
                if embedding.is_some() {
                    match &projected[day] {
                        Some(values) => {
                            x.extend_from_slice(values);
                            x.push(1.0);
                        }
                        None => {
                            x.extend(std::iter::repeat_n(0.0, n_features - columns.len() - 1));
                            x.push(0.0);
                        }
                    }
                }
            }
            y.push(target);
            anchor_index.push(t);
        }
    }
    if y.is_empty() {
        return Err(Error::NoData(format!(
            "no rows: {} dates cannot host window {} + horizon {}",
            n_dates, cfg.window, cfg.horizon
        )));
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut holdout = Vec::new();
    for (row, &t) in anchor_index.iter().enumerate() {
        let date = frame.dates[t];
        if date <= cfg.splits.train_end {
            train.push(row);
        } else if date >= cfg.splits.test_start && date <= cfg.splits.test_end {
            test.push(row);
        } else if date >= cfg.splits.holdout_start && date <= cfg.splits.holdout_end {
            holdout.push(row);
        }
    }
    for (name, split) in [("train", &train), ("test", &test), ("holdout", &holdout)] {
        if split.is_empty() {
            return Err(Error::NoData(format!("empty {name} split")));
        }
    }

    let shuffle_train = cfg.transform.shuffle_train();
    if shuffle_train {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        train.shuffle(&mut rng);
    }

    Ok(DatasetVariant {
        transform: cfg.transform,
        embedding: embedding.map(|e| EmbeddingDesc {
            model_id: e.model_id.clone(),
            dim: e.dim(),
            dim_label: e.dim_label(),
        }),
        window: cfg.window,
        horizon: cfg.horizon,
        feature_names,
        x,
        y,
        anchor_index,
        dates: frame.dates.clone(),
        splits: Splits {
            train,
            test,
            holdout,
        },
        shuffle_train,
        seed: cfg.seed,
        split_config: cfg.splits,
        target_stats,
        provenance: VariantProvenance {
            prune_range: frame.prune_range,
            normalize_range: frame.normalize_info.as_ref().map(|n| n.range),
            pca_fit_range: embedding.and_then(|e| e.fit_range),
            target_stats_range,
        },
    })
}

/// K-fold partition of the given rows into (fit, validate) pairs.
///
/// Validation folds are disjoint, cover every row, and differ in size by at
/// most one. Time-dependent variants get contiguous blocks in the given
/// order; everything else gets a seeded random partition.
pub fn kfold_split(
    rows: &[usize],
    k: usize,
    seed: u64,
    transform: TransformKind,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 || k > rows.len() {
        return Err(Error::Param(format!(
            "k={k} outside 2..={} for k-fold",
            rows.len()
        )));
    }
    let mut ordered: Vec<usize> = rows.to_vec();
    if transform.shuffle_train() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ordered.shuffle(&mut rng);
    } else {
        // Contiguous date blocks; rows arrive in chronological order for
        // time-dependent variants.
        ordered.sort_unstable();
    }

    let n = ordered.len();
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        let validate: Vec<usize> = ordered[start..start + size].to_vec();
        let fit: Vec<usize> = ordered[..start]
            .iter()
            .chain(&ordered[start + size..])
            .copied()
            .collect();
        folds.push((fit, validate));
        start += size;
    }
    Ok(folds)
}

/// Scan a built variant for leakage: every row's window must end strictly
/// before its target date, splits must be disjoint and inside their date
/// ranges, and every recorded fitted-statistic range must end on or before
/// the train cutoff. Returns human-readable violations; empty means clean.
pub fn audit_leakage(variant: &DatasetVariant) -> Vec<String> {
    let mut violations = Vec::new();
    let cutoff = variant.split_config.train_end;

    for row in 0..variant.n_rows() {
        let anchor = variant.date_index(row);
        let target = variant.target_date(row);
        if anchor >= target {
            violations.push(format!(
                "row {row}: window end {anchor} not strictly before target {target}"
            ));
        }
    }

    let mut seen = std::collections::HashSet::new();
    for (name, split) in [
        ("train", &variant.splits.train),
        ("test", &variant.splits.test),
        ("holdout", &variant.splits.holdout),
    ] {
        for &row in split {
            if !seen.insert(row) {
                violations.push(format!("row {row} appears in more than one split"));
            }
            let date = variant.date_index(row);
            let ok = match name {
                "train" => date <= cutoff,
                "test" => {
                    date >= variant.split_config.test_start && date <= variant.split_config.test_end
                }
                _ => {
                    date >= variant.split_config.holdout_start
                        && date <= variant.split_config.holdout_end
                }
            };
            if !ok {
                violations.push(format!("{name} row {row} has out-of-range date {date}"));
            }
        }
    }

    let ranges = [
        ("prune", variant.provenance.prune_range),
        ("normalize", variant.provenance.normalize_range),
        ("pca_fit", variant.provenance.pca_fit_range),
        ("target_stats", variant.provenance.target_stats_range),
    ];
    for (name, range) in ranges {
        if let Some((_, end)) = range {
            if end > cutoff {
                violations.push(format!(
                    "{name} statistics fitted through {end}, past the train cutoff {cutoff}"
                ));
            }
        }
    }

    violations
}

// ---------------------------------------------------------------------------
// Binary columnar dump
// ---------------------------------------------------------------------------

const DUMP_MAGIC: &[u8; 4] = b"HFDV";
const DUMP_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct DumpMeta {
    transform: TransformKind,
    embedding: Option<EmbeddingDesc>,
    window: usize,
    horizon: usize,
    feature_names: Vec<String>,
    y: Vec<f64>,
    anchor_index: Vec<usize>,
    dates: Vec<NaiveDate>,
    splits: Splits,
    shuffle_train: bool,
    seed: u64,
    split_config: SplitConfig,
    target_stats: Option<(f64, f64)>,
    provenance: VariantProvenance,
}

impl DatasetVariant {
    /// Write the variant: versioned header, JSON metadata, then the feature
    /// tensor as raw little-endian f64 columns.
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = DumpMeta {
            transform: self.transform,
            embedding: self.embedding.clone(),
            window: self.window,
            horizon: self.horizon,
            feature_names: self.feature_names.clone(),
            y: self.y.clone(),
            anchor_index: self.anchor_index.clone(),
            dates: self.dates.clone(),
            splits: self.splits.clone(),
            shuffle_train: self.shuffle_train,
            seed: self.seed,
            split_config: self.split_config,
            target_stats: self.target_stats,
            provenance: self.provenance.clone(),
        };
        let meta_bytes =
            serde_json::to_vec(&meta).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(DUMP_MAGIC)?;
        file.write_all(&DUMP_VERSION.to_le_bytes())?;
        file.write_all(&(meta_bytes.len() as u64).to_le_bytes())?;
        file.write_all(&meta_bytes)?;
        file.write_all(&(self.x.len() as u64).to_le_bytes())?;
        for v in &self.x {
            file.write_all(&v.to_le_bytes())?;
        }
        file.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<DatasetVariant> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        file.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                detail: "not a dataset dump (bad magic)".into(),
            });
        }
        let mut word = [0u8; 4];
        file.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != DUMP_VERSION {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                detail: format!("unsupported dump version {version}"),
            });
        }
        let mut len8 = [0u8; 8];
        file.read_exact(&mut len8)?;
        let meta_len = u64::from_le_bytes(len8) as usize;
        let mut meta_bytes = vec![0u8; meta_len];
        file.read_exact(&mut meta_bytes)?;
        let meta: DumpMeta = serde_json::from_slice(&meta_bytes).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            detail: format!("metadata: {e}"),
        })?;
        file.read_exact(&mut len8)?;
        let x_len = u64::from_le_bytes(len8) as usize;
        let mut x = Vec::with_capacity(x_len);
        let mut f8 = [0u8; 8];
        for _ in 0..x_len {
            file.read_exact(&mut f8)?;
            x.push(f64::from_le_bytes(f8));
        }
        Ok(DatasetVariant {
            transform: meta.transform,
            embedding: meta.embedding,
            window: meta.window,
            horizon: meta.horizon,
            feature_names: meta.feature_names,
            x,
            y: meta.y,
            anchor_index: meta.anchor_index,
            dates: meta.dates,
            splits: meta.splits,
            shuffle_train: meta.shuffle_train,
            seed: meta.seed,
            split_config: meta.split_config,
            target_stats: meta.target_stats,
            provenance: meta.provenance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::embed_offline;
    use crate::features::frame_from_columns;
    use crate::linalg::Mat;

    fn split_for(frame: &AlignedFrame, train_frac: f64, test_frac: f64) -> SplitConfig {
        let n = frame.dates.len();
        let train_end = frame.dates[(n as f64 * train_frac) as usize - 1];
        let test_start = frame.dates[(n as f64 * train_frac) as usize];
        let test_end = frame.dates[(n as f64 * (train_frac + test_frac)) as usize - 1];
        let holdout_start = frame.dates[(n as f64 * (train_frac + test_frac)) as usize];
        SplitConfig {
            train_end,
            test_start,
            test_end,
            holdout_start,
            holdout_end: *frame.dates.last().unwrap(),
        }
    }

    fn close_frame(n: usize) -> AlignedFrame {
        let close: Vec<f64> = (0..n).map(|i| 100.0 + (i as f64 * 0.7).sin() * 5.0 + i as f64 * 0.01).collect();
        let vol: Vec<f64> = (0..n).map(|i| 1000.0 + (i % 13) as f64 * 10.0).collect();
        frame_from_columns(vec![("SPY_close", close, true), ("SPY_volume", vol, true)])
    }

    fn cfg(frame: &AlignedFrame, transform: TransformKind, window: usize) -> VariantConfig {
        VariantConfig {
            transform,
            window,
            horizon: 1,
            seed: 42,
            splits: split_for(frame, 0.6, 0.25),
        }
    }

    #[test]
    fn log_return_targets_match_definition() {
        let frame = close_frame(60);
        let variant = build_variant(
            &frame,
            None,
            &BTreeMap::new(),
            &cfg(&frame, TransformKind::LogReturn, 1),
        )
        .unwrap();
        for row in 0..variant.n_rows() {
            let t = variant.anchor_index[row];
            let expect = (frame.target[t + 1] / frame.target[t]).ln();
            assert!((variant.y[row] - expect).abs() < 1e-15);
        }
        assert!(variant.embedding.is_none());
        assert_eq!(variant.n_features(), 2);
    }

    #[test]
    fn time_dependent_targets_use_train_stats() {
        let frame = close_frame(80);
        let variant = build_variant(
            &frame,
            None,
            &BTreeMap::new(),
            &cfg(&frame, TransformKind::TimeDependent, 3),
        )
        .unwrap();
        let (mean, std) = variant.target_stats.unwrap();
        for row in 0..variant.n_rows() {
            let t = variant.anchor_index[row];
            let expect = (frame.target[t + 1] - mean) / std;
            assert!((variant.y[row] - expect).abs() < 1e-12);
        }
        assert!(!variant.shuffle_train);
        // Stats really are the train-range moments of the raw series.
        let cutoff = variant.split_config.train_end;
        let train_vals: Vec<f64> = frame
            .dates
            .iter()
            .zip(&frame.target)
            .filter(|(d, _)| **d <= cutoff)
            .map(|(_, v)| *v)
            .collect();
        let m = train_vals.iter().sum::<f64>() / train_vals.len() as f64;
        assert!((m - mean).abs() < 1e-12);
    }

    #[test]
    fn embedding_slot_and_absence_indicator() {
        let frame = close_frame(40);
        let mut daily = BTreeMap::new();
        // Every other day has a headline embedding.
        for (i, &d) in frame.dates.iter().enumerate() {
            if i.is_multiple_of(2) {
                daily.insert(d, embed_offline(&format!("day {i}"), "small", 6, 1));
            }
        }
        let emb = EmbeddingVariant {
            model_id: "small".into(),
            projection: Projection::Native { dim: 6 },
            fit_range: None,
        };
        let variant = build_variant(
            &frame,
            Some(&emb),
            &daily,
            &cfg(&frame, TransformKind::LogReturn, 1),
        )
        .unwrap();
        assert_eq!(variant.n_features(), 2 + 6 + 1);
        assert_eq!(variant.embedding.as_ref().unwrap().dim_label, "native");
        for row in 0..variant.n_rows() {
            let t = variant.anchor_index[row];
            let feats = variant.row_window(row);
            let emb_slice = &feats[2..8];
            let has = feats[8];
            if t.is_multiple_of(2) {
                assert_eq!(has, 1.0);
                let expect = daily.get(&frame.dates[t]).unwrap();
                assert_eq!(emb_slice, &expect.values[..]);
            } else {
                assert_eq!(has, 0.0);
                assert!(emb_slice.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn pca_projection_feeds_the_rows() {
        let frame = close_frame(40);
        let mut daily = BTreeMap::new();
        let mut rows = Vec::new();
        for (i, &d) in frame.dates.iter().enumerate() {
            let v = embed_offline(&format!("headline {i}"), "small", 8, 2);
            rows.push(v.values.clone());
            daily.insert(d, v);
        }
        let model = crate::pca::fit_pca(&Mat::from_rows(rows).unwrap(), 3).unwrap();
        let emb = EmbeddingVariant {
            model_id: "small".into(),
            projection: Projection::Pca(model.clone()),
            fit_range: Some((frame.dates[0], frame.dates[20])),
        };
        let variant = build_variant(
            &frame,
            Some(&emb),
            &daily,
            &cfg(&frame, TransformKind::LinearDiff, 2),
        )
        .unwrap();
        assert_eq!(variant.n_features(), 2 + 3 + 1);
        let row0 = variant.row_window(0);
        let day0 = variant.anchor_index[0] - 1; // first window day of row 0
        let expect = crate::pca::project(&model, &daily[&frame.dates[day0]].values).unwrap();
        assert_eq!(&row0[2..5], &expect[..]);
    }

    #[test]
    fn same_seed_reproduces_rows_and_splits() {
        let frame = close_frame(70);
        let c = cfg(&frame, TransformKind::LogReturn, 4);
        let a = build_variant(&frame, None, &BTreeMap::new(), &c).unwrap();
        let b = build_variant(&frame, None, &BTreeMap::new(), &c).unwrap();
        assert_eq!(a, b);

        let mut c2 = c;
        c2.seed = 43;
        let d = build_variant(&frame, None, &BTreeMap::new(), &c2).unwrap();
        assert_ne!(a.splits.train, d.splits.train);
        // Shuffling permutes order only: same set of train rows.
        let mut sa = a.splits.train.clone();
        let mut sd = d.splits.train.clone();
        sa.sort_unstable();
        sd.sort_unstable();
        assert_eq!(sa, sd);
    }

    #[test]
    fn window_consumes_leading_days_and_short_data_errors() {
        let frame = close_frame(60);
        let c = cfg(&frame, TransformKind::LogReturn, 5);
        let v = build_variant(&frame, None, &BTreeMap::new(), &c).unwrap();
        assert_eq!(v.anchor_index[0], 4);
        assert_eq!(v.n_rows(), 60 - 5 + 1 - 1);

        let tiny = close_frame(30);
        let mut c = cfg(&tiny, TransformKind::LogReturn, 40);
        c.window = 40;
        assert!(build_variant(&tiny, None, &BTreeMap::new(), &c).is_err());
    }

    #[test]
    fn empty_split_is_an_error() {
        let frame = close_frame(50);
        let mut c = cfg(&frame, TransformKind::LogReturn, 1);
        // Push the holdout window past the data: empty holdout.
        c.splits.holdout_start = frame.dates[49] + chrono::Days::new(10);
        c.splits.holdout_end = frame.dates[49] + chrono::Days::new(20);
        let err = build_variant(&frame, None, &BTreeMap::new(), &c).unwrap_err();
        assert!(err.to_string().contains("holdout"), "{err}");
    }

    #[test]
    fn close_series_reconstructs_from_true_targets() {
        let frame = close_frame(50);
        for transform in [TransformKind::LogReturn, TransformKind::LinearDiff] {
            let v = build_variant(&frame, None, &BTreeMap::new(), &cfg(&frame, transform, 1))
                .unwrap();
            // Rows are chronological with consecutive anchors; rebuild the
            // close series from the first close and the target stream.
            let mut close = frame.target[v.anchor_index[0]];
            for row in 0..v.n_rows() {
                close = match transform {
                    TransformKind::LogReturn => close * v.y[row].exp(),
                    TransformKind::LinearDiff => close + v.y[row],
                    TransformKind::TimeDependent => unreachable!(),
                };
                let actual = frame.target[v.anchor_index[row] + 1];
                assert!((close - actual).abs() < 1e-9, "row {row}: {close} vs {actual}");
            }
        }
    }

    #[test]
    fn kfold_partitions_cover_everything() {
        let rows: Vec<usize> = (100..160).collect();
        let folds = kfold_split(&rows, 7, 9, TransformKind::LogReturn).unwrap();
        assert_eq!(folds.len(), 7);
        let mut all: Vec<usize> = folds.iter().flat_map(|(_, v)| v.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, rows);
        for (fit, validate) in &folds {
            assert_eq!(fit.len() + validate.len(), rows.len());
            assert!(validate.iter().all(|r| !fit.contains(r)));
        }
        let sizes: Vec<usize> = folds.iter().map(|(_, v)| v.len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn kfold_leave_one_out_and_contiguous_blocks() {
        let rows: Vec<usize> = (0..10).collect();
        let loo = kfold_split(&rows, 10, 1, TransformKind::LinearDiff).unwrap();
        assert!(loo.iter().all(|(_, v)| v.len() == 1));

        let ordered: Vec<usize> = (0..100).collect();
        let folds = kfold_split(&ordered, 5, 1, TransformKind::TimeDependent).unwrap();
        for (i, (_, validate)) in folds.iter().enumerate() {
            assert_eq!(validate.len(), 20);
            let expect: Vec<usize> = (i * 20..(i + 1) * 20).collect();
            assert_eq!(validate, &expect, "fold {i} not a contiguous block");
        }

        assert!(kfold_split(&rows, 1, 0, TransformKind::LogReturn).is_err());
        assert!(kfold_split(&rows, 11, 0, TransformKind::LogReturn).is_err());
    }

    #[test]
    fn audit_passes_built_variants_and_catches_corruption() {
        let frame = close_frame(60);
        for transform in TransformKind::ALL {
            let v = build_variant(&frame, None, &BTreeMap::new(), &cfg(&frame, transform, 3))
                .unwrap();
            assert!(audit_leakage(&v).is_empty());
        }

        let mut v = build_variant(
            &frame,
            None,
            &BTreeMap::new(),
            &cfg(&frame, TransformKind::LogReturn, 3),
        )
        .unwrap();
        // Claim normalization was fitted past the cutoff.
        v.provenance.normalize_range = Some((frame.dates[0], *frame.dates.last().unwrap()));
        let violations = audit_leakage(&v);
        assert!(violations.iter().any(|m| m.contains("normalize")), "{violations:?}");
    }

    #[test]
    fn dump_round_trip() {
        let frame = close_frame(45);
        let v = build_variant(
            &frame,
            None,
            &BTreeMap::new(),
            &cfg(&frame, TransformKind::LogReturn, 2),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("variant.hfdv");
        v.save(&path).unwrap();
        let back = DatasetVariant::load(&path).unwrap();
        assert_eq!(v, back);

        std::fs::write(&path, b"garbage").unwrap();
        assert!(DatasetVariant::load(&path).is_err());
    }
}
