//! The pipeline stages behind the CLI subcommands: ingest, embed, grid,
//! report. Each returns a summary the binary prints; all output files are
//! byte-stable given unchanged inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::config::{ProviderKind, RunConfigFile};
use crate::corpus::{
    align_calendar, load_headlines, load_market_csv, select_daily_headline, AlignedFrame,
    HeadlineRecord, MarketSchema, SourceSeries,
};
use crate::embed::{
    fetch_embeddings, EmbeddingCache, EmbeddingProvider, EmbeddingVector, FetchReport,
    OfflineProvider, RemoteProvider,
};
use crate::error::{Error, Result};
use crate::features::{normalize_with_train_stats, prune_correlated, PruneReport};
use crate::runner::{
    self, enumerate_grid, execute_grid, headline_uplift, leaderboard, load_results,
    min_smape_by_pca, DataContext, RunFilter, SortKey, UpliftReport,
};

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct IngestSummary {
    pub headlines_loaded: usize,
    pub headline_days: usize,
    pub rows: usize,
    pub columns_kept: usize,
    pub prune: PruneReport,
    pub frame_path: PathBuf,
}

/// Load, filter, align, prune and normalize; persist the frame and the
/// prune report under the cache directory.
pub fn cmd_ingest(config: &RunConfigFile) -> Result<IngestSummary> {
    let records = load_headlines(&config.paths.headlines, &config.whitelist_set())?;
    let headline_days = crate::corpus::headlines_per_day(&records).len();

    let load = |m: &crate::config::MarketFileConfig| -> Result<SourceSeries> {
        let series = load_market_csv(
            &m.path,
            &MarketSchema {
                name: m.name.clone(),
                columns: m.schema.clone(),
            },
        )?;
        Ok(SourceSeries {
            series,
            select: m.select.clone(),
            normalize: m.normalize,
        })
    };
    let anchor = load(&config.market.anchor)?;
    let others: Vec<SourceSeries> = config
        .market
        .others
        .iter()
        .map(load)
        .collect::<Result<_>>()?;

    let frame = align_calendar(&anchor, &config.market.target_column, &others)?;
    let train_range = config.grid.splits.train_range();
    let (frame, prune) = prune_correlated(&frame, config.features.prune_threshold, train_range)?;
    let frame = normalize_with_train_stats(&frame, train_range)?;

    std::fs::create_dir_all(&config.paths.cache_dir)?;
    let frame_path = config.frame_path();
    let frame_json =
        serde_json::to_string(&frame).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    std::fs::write(&frame_path, frame_json)?;
    let report_json =
        serde_json::to_string_pretty(&prune).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    std::fs::write(config.prune_report_path(), report_json)?;

    Ok(IngestSummary {
        headlines_loaded: records.len(),
        headline_days,
        rows: frame.dates.len(),
        columns_kept: frame.active_columns().len(),
        prune,
        frame_path,
    })
}

fn load_frame(config: &RunConfigFile) -> Result<AlignedFrame> {
    let path = config.frame_path();
    let body = std::fs::read_to_string(&path).map_err(|_| {
        Error::NoData(format!(
            "no ingested frame at {}; run the ingest command first",
            path.display()
        ))
    })?;
    serde_json::from_str(&body).map_err(|e| Error::Parse {
        path,
        detail: e.to_string(),
    })
}

// ---------------------------------------------------------------------------
// embed
// ---------------------------------------------------------------------------

fn build_provider(p: &crate::config::ProviderConfig) -> Result<Box<dyn EmbeddingProvider>> {
    match p.kind {
        ProviderKind::Offline => Ok(Box::new(OfflineProvider::new(&p.model_id, p.dim, p.seed)?)),
        ProviderKind::Remote => {
            let endpoint = p
                .endpoint
                .as_deref()
                .ok_or_else(|| Error::Config("remote provider without endpoint".into()))?;
            Ok(Box::new(RemoteProvider::new(
                &p.model_id,
                p.dim,
                endpoint,
                &p.auth_env,
                p.request_batch,
            )?))
        }
    }
}

/// Fetch embeddings for every whitelisted headline, one report per
/// configured provider.
pub fn cmd_embed(config: &RunConfigFile) -> Result<Vec<(String, FetchReport)>> {
    if config.providers.is_empty() {
        return Err(Error::Config("no embedding providers configured".into()));
    }
    let records = load_headlines(&config.paths.headlines, &config.whitelist_set())?;
    std::fs::create_dir_all(&config.paths.cache_dir)?;
    let mut cache = EmbeddingCache::open(&config.cache_path())?;
    let fetch_cfg = config.fetch.to_fetch_config();

    let mut reports = Vec::new();
    for p in &config.providers {
        let provider = build_provider(p)?;
        let report = fetch_embeddings(&records, provider.as_ref(), &fetch_cfg, &mut cache)?;
        reports.push((p.model_id.clone(), report));
    }
    Ok(reports)
}

// ---------------------------------------------------------------------------
// grid
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub enum GridSummary {
    /// A dry run only counts descriptors.
    DryRun { descriptors: usize },
    Executed {
        descriptors: usize,
        executed: usize,
        reused: usize,
        failed: usize,
        results_dir: PathBuf,
    },
}

/// Assemble per-day embeddings for every grid-referenced model from the
/// corpus selection stream plus the cache.
fn daily_embeddings(
    config: &RunConfigFile,
    records: &[HeadlineRecord],
    frame: &AlignedFrame,
    cache: &EmbeddingCache,
) -> Result<BTreeMap<String, BTreeMap<NaiveDate, EmbeddingVector>>> {
    let mut models: Vec<&str> = config
        .grid
        .embedding_axes
        .iter()
        .map(|a| a.model_id.as_str())
        .collect();
    models.dedup();

    let mut out = BTreeMap::new();
    for model in models {
        let mut per_day = BTreeMap::new();
        let mut missing = 0usize;
        for &date in &frame.dates {
            if let Some(record) = select_daily_headline(records, date, config.corpus.selection_seed)
            {
                match cache.get(record.id, model) {
                    Some(vector) => {
                        per_day.insert(date, vector.clone());
                    }
                    None => missing += 1,
                }
            }
        }
        if missing > 0 {
            return Err(Error::NoData(format!(
                "{missing} selected headlines lack cached embeddings for model {model}; \
                 run the embed command first"
            )));
        }
        out.insert(model.to_string(), per_day);
    }
    Ok(out)
}

/// Build variants, execute the grid (resuming over existing result files),
/// and write per-run JSON plus the consolidated CSV.
pub fn cmd_grid(
    config: &RunConfigFile,
    dry_run: bool,
    filter: &RunFilter,
    seed_override: Option<u64>,
) -> Result<GridSummary> {
    let mut grid = config.grid.clone();
    if let Some(seed) = seed_override {
        grid.seed = seed;
    }
    let descriptors: Vec<_> = enumerate_grid(&grid)?
        .into_iter()
        .filter(|d| filter.matches(d))
        .collect();
    if dry_run {
        return Ok(GridSummary::DryRun {
            descriptors: descriptors.len(),
        });
    }

    let frame = load_frame(config)?;
    let records = load_headlines(&config.paths.headlines, &config.whitelist_set())?;
    let cache = EmbeddingCache::open(&config.cache_path())?;
    let daily = daily_embeddings(config, &records, &frame, &cache)?;
    let mut ctx = DataContext::new(frame, daily);
    ctx.pca_dir = Some(config.paths.cache_dir.clone());

    let outcome = execute_grid(&grid, &ctx, &config.paths.results_dir, filter)?;
    Ok(GridSummary::Executed {
        descriptors: descriptors.len(),
        executed: outcome.executed,
        reused: outcome.reused,
        failed: outcome.failures.len(),
        results_dir: config.paths.results_dir.clone(),
    })
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct ReportSummary {
    pub runs: usize,
    pub failures: usize,
    pub leaderboard_rows: usize,
    pub uplift: UpliftReport,
    pub leaderboard_path: PathBuf,
    pub min_smape_path: PathBuf,
    pub uplift_path: PathBuf,
}

/// Read a results directory and emit the three report CSVs: leaderboard,
/// minimum SMAPE per PCA dimension, and headline uplift.
pub fn cmd_report(
    results_dir: &Path,
    out_dir: Option<&Path>,
    sort: SortKey,
    top: Option<usize>,
) -> Result<ReportSummary> {
    let (results, failures) = load_results(results_dir)?;
    if results.is_empty() {
        return Err(Error::NoData(format!(
            "no successful runs in {}",
            results_dir.display()
        )));
    }
    let out_dir = out_dir.unwrap_or(results_dir);
    std::fs::create_dir_all(out_dir)?;

    let rows = leaderboard(&results, sort, top)?;
    let mins = min_smape_by_pca(&results);
    let uplift = headline_uplift(&results);

    let leaderboard_path = out_dir.join("leaderboard.csv");
    let min_smape_path = out_dir.join("min_smape_by_pca.csv");
    let uplift_path = out_dir.join("uplift.csv");
    runner::write_leaderboard_csv(&leaderboard_path, &rows)?;
    runner::write_min_smape_csv(&min_smape_path, &mins)?;
    runner::write_uplift_csv(&uplift_path, &uplift)?;

    Ok(ReportSummary {
        runs: results.len(),
        failures: failures.len(),
        leaderboard_rows: rows.len(),
        uplift,
        leaderboard_path,
        min_smape_path,
        uplift_path,
    })
}
