//! Train all five architectures on one dataset variant and compare their
//! train/test metrics.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use headline_forecast::corpus::{align_calendar, SourceSeries};
use headline_forecast::features::{
    build_variant, normalize_with_train_stats, prune_correlated, SplitConfig, TransformKind,
    VariantConfig,
};
use headline_forecast::metrics::MetricsReport;
use headline_forecast::models::{predict_rows, train, Arch, ModelSpec};
use headline_forecast::synthetic::{gen_market, trading_days};
use headline_forecast::Result;

fn main() -> Result<()> {
    let days = trading_days(NaiveDate::from_ymd_opt(2004, 1, 2).unwrap(), 420);
    let market = gen_market(&days, 17);
    let anchor = SourceSeries {
        series: market.equity,
        select: ["close", "open", "volume"].map(String::from).to_vec(),
        normalize: true,
    };
    let frame = align_calendar(&anchor, "close", &[])?;
    let splits = SplitConfig {
        train_end: days[299],
        test_start: days[300],
        test_end: days[359],
        holdout_start: days[360],
        holdout_end: days[419],
    };
    let train_range = splits.train_range();
    let (frame, _) = prune_correlated(&frame, 0.95, train_range)?;
    let frame = normalize_with_train_stats(&frame, train_range)?;

    let variant = build_variant(
        &frame,
        None,
        &BTreeMap::new(),
        &VariantConfig {
            transform: TransformKind::LogReturn,
            window: 5,
            horizon: 1,
            seed: 3,
            splits,
        },
    )?;
    println!(
        "variant: {} rows x {} days x {} features, {} train / {} test",
        variant.n_rows(),
        variant.window,
        variant.n_features(),
        variant.splits.train.len(),
        variant.splits.test.len()
    );

    println!(
        "\n{:<8} {:>10} {:>10} {:>12} {:>12}",
        "arch", "train mse", "test mse", "train smape", "test smape"
    );
    for arch in Arch::ALL {
        let mut spec = ModelSpec::new(arch, variant.n_features(), variant.window);
        spec.epochs = 80;
        spec.seed = 11;
        let model = train(&spec, &variant, None)?;
        let (train_pred, train_y) = predict_rows(&model, &variant, &variant.splits.train)?;
        let (test_pred, test_y) = predict_rows(&model, &variant, &variant.splits.test)?;
        let m = MetricsReport::from_predictions(&train_y, &train_pred, &test_y, &test_pred)?;
        println!(
            "{:<8} {:>10.6} {:>10.6} {:>12.2} {:>12.2}",
            arch.as_str(),
            m.train_mse,
            m.test_mse,
            m.train_smape,
            m.test_smape
        );
    }
    println!("\n(log returns of a random walk carry no learnable signal; the");
    println!(" point here is the shared training loop across architectures)");
    Ok(())
}
