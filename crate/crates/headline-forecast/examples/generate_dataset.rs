//! Generate a ready-to-run synthetic workspace: market CSVs, a headline
//! corpus, and a run configuration for the CLI.
//!
//! ```bash
//! cargo run --example generate_dataset -- ./synthetic-data
//! headline-forecast --config ./synthetic-data/run.json ingest
//! headline-forecast --config ./synthetic-data/run.json embed
//! headline-forecast --config ./synthetic-data/run.json grid
//! headline-forecast --config ./synthetic-data/run.json report
//! ```

use std::path::PathBuf;

use chrono::NaiveDate;
use headline_forecast::synthetic::{
    gen_headlines, gen_market, trading_days, write_headlines_json, write_market_csv,
};
use headline_forecast::Result;

fn main() -> Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "synthetic-data".into())
        .into();
    std::fs::create_dir_all(&out)?;

    let days = trading_days(NaiveDate::from_ymd_opt(2004, 1, 2).unwrap(), 600);
    let market = gen_market(&days, 42);
    write_market_csv(&out.join("spy.csv"), &market.equity)?;
    write_market_csv(&out.join("dxy.csv"), &market.dollar_index)?;
    write_market_csv(&out.join("yields.csv"), &market.yields)?;
    let headlines = gen_headlines(&days, 43);
    write_headlines_json(&out.join("headlines.json"), &headlines)?;

    let split = |i: usize| days[i].to_string();
    let config = format!(
        r#"{{
  "paths": {{
    "headlines": "{d}/headlines.json",
    "cache_dir": "{d}/cache",
    "results_dir": "{d}/results"
  }},
  "market": {{
    "anchor": {{
      "name": "SPY",
      "path": "{d}/spy.csv",
      "schema": ["open", "high", "low", "close", "volume"],
      "select": ["close", "open", "volume"],
      "normalize": true
    }},
    "target_column": "close",
    "others": [
      {{ "name": "DXY", "path": "{d}/dxy.csv",
         "schema": ["open", "high", "low", "close"],
         "select": ["open", "high", "low"], "normalize": false }},
      {{ "name": "YIELDS", "path": "{d}/yields.csv",
         "schema": ["y3m", "y10y"],
         "select": ["y3m", "y10y"], "normalize": false }}
    ]
  }},
  "corpus": {{ "whitelist": ["finance", "business", "markets", "economy"], "selection_seed": 7 }},
  "providers": [
    {{ "model_id": "small", "kind": "offline", "dim": 32, "seed": 1 }}
  ],
  "fetch": {{ "workers": 64, "writer_count": 4, "flush_threshold": 100,
             "retry_limit": 3, "backoff_ms": 250 }},
  "grid": {{
    "architectures": ["FFNN", "NN_HMM"],
    "transforms": ["TIME_DEPENDENT", "LOG_RETURN", "LINEAR_DIFF"],
    "embedding_axes": [{{ "model_id": "small", "dims": [2, 8, "native"] }}],
    "window": 3,
    "horizon": 1,
    "epochs": 30,
    "seed": 7,
    "parallelism": 4,
    "search_budget": 1,
    "kfolds": 2,
    "splits": {{
      "train_end": "{t0}",
      "test_start": "{t1}", "test_end": "{t2}",
      "holdout_start": "{t3}", "holdout_end": "{t4}"
    }}
  }}
}}
"#,
        d = out.display(),
        t0 = split(419),
        t1 = split(420),
        t2 = split(509),
        t3 = split(510),
        t4 = split(599),
    );
    std::fs::write(out.join("run.json"), config)?;

    println!("wrote {} trading days to {}", days.len(), out.display());
    println!("  spy.csv, dxy.csv, yields.csv");
    println!("  headlines.json ({} headlines)", headlines.len());
    println!("  run.json (grid: 2 architectures x 3 transforms x 4 variants = 24 runs)");
    println!();
    println!("next: headline-forecast --config {}/run.json ingest", out.display());
    Ok(())
}
