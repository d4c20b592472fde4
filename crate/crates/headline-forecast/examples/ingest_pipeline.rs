//! Load, align, prune and normalize market data in memory: the ingest
//! stage without any files.

use chrono::NaiveDate;
use headline_forecast::corpus::{align_calendar, SourceSeries};
use headline_forecast::features::{normalize_with_train_stats, prune_correlated};
use headline_forecast::synthetic::{gen_market, trading_days};
use headline_forecast::Result;

fn main() -> Result<()> {
    let days = trading_days(NaiveDate::from_ymd_opt(2004, 1, 2).unwrap(), 400);
    let market = gen_market(&days, 42);

    let anchor = SourceSeries {
        series: market.equity,
        select: ["close", "open", "volume"].map(String::from).to_vec(),
        normalize: true,
    };
    let others = vec![
        SourceSeries {
            series: market.dollar_index,
            // Select everything; pruning decides what survives.
            select: ["open", "high", "low"].map(String::from).to_vec(),
            normalize: false,
        },
        SourceSeries {
            series: market.yields,
            select: ["y3m", "y10y"].map(String::from).to_vec(),
            normalize: false,
        },
    ];

    let frame = align_calendar(&anchor, "close", &others)?;
    println!(
        "aligned frame: {} trading days x {} columns ({} .. {})",
        frame.dates.len(),
        frame.columns.len(),
        frame.dates[0],
        frame.dates.last().unwrap()
    );

    let train_range = (frame.dates[0], frame.dates[279]);
    let (frame, report) = prune_correlated(&frame, 0.95, train_range)?;
    for d in &report.dropped {
        println!(
            "pruned {:<10} |corr| {:.4} with {}",
            d.column,
            d.correlation.abs(),
            d.partner
        );
    }
    for c in &report.zero_variance {
        println!("pruned {c}: zero variance");
    }

    let frame = normalize_with_train_stats(&frame, train_range)?;
    let info = frame.normalize_info.as_ref().expect("normalized");
    for (name, mean, std) in &info.stats {
        println!("normalized {name:<12} train mean {mean:>10.4}, std {std:>8.4}");
    }
    println!(
        "surviving columns: {:?}",
        frame
            .active_columns()
            .iter()
            .map(|c| c.name.as_str())
            .collect::<Vec<_>>()
    );
    Ok(())
}
