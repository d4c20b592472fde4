//! A complete miniature experiment grid, in memory: enumerate, execute on a
//! worker pool, and print the leaderboard plus per-dimension minima.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use headline_forecast::corpus::{
    align_calendar, headline_id, select_daily_headline, HeadlineRecord, SourceSeries,
};
use headline_forecast::embed::embed_offline;
use headline_forecast::features::{
    normalize_with_train_stats, prune_correlated, SplitConfig, TransformKind,
};
use headline_forecast::models::Arch;
use headline_forecast::runner::{
    enumerate_grid, execute_grid, leaderboard, min_smape_by_pca, DataContext, EmbeddingAxis,
    GridConfig, PcaDimSpec, RunFilter, SortKey,
};
use headline_forecast::synthetic::{gen_headlines, gen_market, trading_days};
use headline_forecast::Result;

fn main() -> Result<()> {
    let days = trading_days(NaiveDate::from_ymd_opt(2004, 1, 2).unwrap(), 300);
    let market = gen_market(&days, 5);
    let anchor = SourceSeries {
        series: market.equity,
        select: ["close", "open", "volume"].map(String::from).to_vec(),
        normalize: true,
    };
    let frame = align_calendar(&anchor, "close", &[])?;
    let splits = SplitConfig {
        train_end: days[199],
        test_start: days[200],
        test_end: days[249],
        holdout_start: days[250],
        holdout_end: days[299],
    };
    let train_range = splits.train_range();
    let (frame, _) = prune_correlated(&frame, 0.95, train_range)?;
    let frame = normalize_with_train_stats(&frame, train_range)?;

    // One selected headline embedding per trading day.
    let mut records: Vec<HeadlineRecord> = gen_headlines(&days, 6)
        .into_iter()
        .filter(|(_, c, _)| ["finance", "business", "markets", "economy"].contains(&c.as_str()))
        .map(|(date, category, text)| HeadlineRecord {
            id: headline_id(date, &text),
            date,
            category,
            text,
        })
        .collect();
    records.sort_by(|a, b| a.date.cmp(&b.date).then(a.id.cmp(&b.id)));
    let mut per_day = BTreeMap::new();
    for &date in &frame.dates {
        if let Some(rec) = select_daily_headline(&records, date, 7) {
            per_day.insert(date, embed_offline(&rec.text, "small", 16, 1));
        }
    }
    let ctx = DataContext::new(frame, BTreeMap::from([("small".to_string(), per_day)]));

    let config = GridConfig {
        architectures: vec![Arch::Ffnn, Arch::NnHmm],
        transforms: vec![TransformKind::LogReturn, TransformKind::LinearDiff],
        embedding_axes: vec![EmbeddingAxis {
            model_id: "small".into(),
            dims: vec![PcaDimSpec::Dim(2), PcaDimSpec::Native],
        }],
        window: 3,
        horizon: 1,
        epochs: 25,
        seed: 99,
        parallelism: 4,
        search_budget: 2,
        kfolds: 2,
        splits,
    };
    let n = enumerate_grid(&config)?.len();
    println!("executing {n} runs on {} workers...", config.parallelism);

    let dir = tempfile::tempdir()?;
    let outcome = execute_grid(&config, &ctx, dir.path(), &RunFilter::default())?;
    println!(
        "done: {} ok, {} failed ({} reused)\n",
        outcome.results.len(),
        outcome.failures.len(),
        outcome.reused
    );

    println!(
        "{:<8} {:>8} {:>12} {:>12} {:>10} {:>10}",
        "arch", "pca", "train smape", "test smape", "train r2", "test r2"
    );
    for row in leaderboard(&outcome.results, SortKey::TestSmape, Some(8))? {
        println!(
            "{:<8} {:>8} {:>12.2} {:>12.2} {:>10.3} {:>10.3}",
            row.architecture,
            row.pca_dimension,
            row.train_smape,
            row.test_smape,
            row.train_r2,
            row.test_r2
        );
    }

    println!("\nminimum test SMAPE per dimension bucket:");
    for (label, value) in min_smape_by_pca(&outcome.results) {
        println!("  {label:>6}: {value:.2}");
    }
    Ok(())
}
