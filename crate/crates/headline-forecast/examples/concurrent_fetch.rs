//! The many-fetchers/few-writers pipeline against a latency-simulating
//! provider: hundreds of workers turn hours of sequential round-trips into
//! seconds, while four writers batch the cache appends.

use std::time::Duration;

use chrono::NaiveDate;
use headline_forecast::corpus::{headline_id, HeadlineRecord};
use headline_forecast::embed::{
    fetch_embeddings, EmbeddingCache, FetchConfig, MockLatencyProvider, OfflineProvider,
};
use headline_forecast::Result;

fn main() -> Result<()> {
    let base = NaiveDate::from_ymd_opt(2004, 1, 2).unwrap();
    let records: Vec<HeadlineRecord> = (0..2000)
        .map(|i| {
            let date = base + chrono::Days::new((i / 3) as u64);
            let text = format!("wire headline {i}");
            HeadlineRecord {
                id: headline_id(date, &text),
                date,
                category: "finance".into(),
                text,
            }
        })
        .collect();

    let latency = Duration::from_millis(40);
    let provider = MockLatencyProvider::new(OfflineProvider::new("small", 64, 1)?, latency);
    let sequential_estimate = latency * records.len() as u32;

    let dir = tempfile::tempdir()?;
    let mut cache = EmbeddingCache::open(&dir.path().join("embeddings.jsonl"))?;
    let cfg = FetchConfig {
        workers: 200,
        writer_count: 4,
        flush_threshold: 100,
        ..FetchConfig::default()
    };
    let report = fetch_embeddings(&records, &provider, &cfg, &mut cache)?;

    println!(
        "{} records at {:?} simulated latency each",
        records.len(),
        latency
    );
    println!("sequential estimate: {:.1?}", sequential_estimate);
    println!(
        "concurrent ({} workers, {} writers, flush {}): {:.2?}  ({:.0}x speedup)",
        cfg.workers,
        cfg.writer_count,
        cfg.flush_threshold,
        report.wall,
        sequential_estimate.as_secs_f64() / report.wall.as_secs_f64()
    );
    println!(
        "fetched {}, batch appends {}, provider calls {}",
        report.fetched,
        report.flushes,
        provider.calls()
    );

    // A second pass touches nothing.
    let rerun = fetch_embeddings(&records, &provider, &cfg, &mut cache)?;
    println!(
        "rerun: {} fetched, {} already cached",
        rerun.fetched, rerun.cached
    );
    Ok(())
}
