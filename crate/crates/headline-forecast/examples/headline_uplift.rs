//! The planted-signal uplift experiment: generate a market whose next-day
//! log return is driven by each day's headline embedding, then measure how
//! much better the with-embedding models forecast than the no-headline
//! baseline.

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
    execute_grid, headline_uplift, DataContext, EmbeddingAxis, GridConfig, PcaDimSpec, RunFilter,
};
use headline_forecast::synthetic::{gen_planted_uplift, trading_days};
use headline_forecast::Result;

fn main() -> Result<()> {
    let days = trading_days(NaiveDate::from_ymd_opt(2004, 1, 2).unwrap(), 400);
    let dim = 24;
    let planted = gen_planted_uplift(&days, "small", dim, 5, 0.25, 0.002, 71);
    println!(
        "planted market: {} days; log return = 0.25 * (u . embedding) + 0.002 * noise",
        days.len()
    );

    let anchor = SourceSeries {
        series: planted.equity,
        select: ["close", "open", "volume"].map(String::from).to_vec(),
        normalize: true,
    };
    let frame = align_calendar(&anchor, "close", &[])?;
    let splits = SplitConfig {
        train_end: days[279],
        test_start: days[280],
        test_end: days[339],
        holdout_start: days[340],
        holdout_end: days[399],
    };
    let train_range = splits.train_range();
    let (frame, _) = prune_correlated(&frame, 0.95, train_range)?;
    let frame = normalize_with_train_stats(&frame, train_range)?;

    let mut records: Vec<HeadlineRecord> = planted
        .headlines
        .iter()
        .map(|(date, category, text)| HeadlineRecord {
            id: headline_id(*date, text),
            date: *date,
            category: category.clone(),
            text: text.clone(),
        })
        .collect();
    records.sort_by(|a, b| a.date.cmp(&b.date).then(a.id.cmp(&b.id)));
    let mut per_day = BTreeMap::new();
    for &date in &frame.dates {
        if let Some(rec) = select_daily_headline(&records, date, 13) {
            per_day.insert(date, embed_offline(&rec.text, "small", dim, 5));
        }
    }
    let ctx = DataContext::new(frame, BTreeMap::from([("small".to_string(), per_day)]));

    let config = GridConfig {
        architectures: vec![Arch::Ffnn],
        transforms: vec![TransformKind::LogReturn],
        embedding_axes: vec![EmbeddingAxis {
            model_id: "small".into(),
            dims: vec![PcaDimSpec::Dim(4), PcaDimSpec::Native],
        }],
        window: 1,
        horizon: 1,
        epochs: 200,
        seed: 2024,
        parallelism: 3,
        search_budget: 2,
        kfolds: 2,
        splits,
    };
    println!("training no-headline baseline plus PCA-4 and native embedding variants...\n");
    let dir = tempfile::tempdir()?;
    let outcome = execute_grid(&config, &ctx, dir.path(), &RunFilter::default())?;

    for r in &outcome.results {
        println!(
            "{:<34} test smape {:>7.2}  test r2 {:>7.3}",
            r.run_id, r.metrics.test_smape, r.metrics.test_r2
        );
    }
    let report = headline_uplift(&outcome.results);
    for row in &report.rows {
        println!(
            "\n{} / {}: no-headline smape {:.2} -> best with-embedding {:.2}",
            row.arch, row.transform, row.smape_none, row.smape_best_embedding
        );
        println!("headline uplift: {:.1}%", 100.0 * row.uplift);
    }
    Ok(())
}
