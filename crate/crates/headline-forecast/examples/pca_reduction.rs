//! PCA over headline embeddings: explained variance by dimension and the
//! pairwise-distance contraction that motivates reducing before training.

use headline_forecast::embed::embed_offline;
use headline_forecast::linalg::Mat;
use headline_forecast::pca::{explained_variance, fit_pca, pairwise_distance_stats, project};
use headline_forecast::Result;

fn main() -> Result<()> {
    // 500 embeddings at a native width of 256.
    let rows: Vec<Vec<f64>> = (0..500)
        .map(|i| embed_offline(&format!("headline {i}"), "small", 256, 1).values)
        .collect();
    let x = Mat::from_rows(rows.clone())?;

    let full = fit_pca(&x, 64)?;
    println!("fitted on {} rows, native dim {}", full.fitted_on, full.dim());

    println!("\ncumulative explained variance:");
    let ratios = explained_variance(&full)?;
    for k in [2usize, 4, 8, 16, 32, 64] {
        let cum: f64 = ratios[..k].iter().sum();
        println!("  k = {k:>3}: {:>6.2}%", 100.0 * cum);
    }

    let before = pairwise_distance_stats(&x, 5000, 9)?;
    println!(
        "\npairwise distances at native dim: mean {:.4}, std {:.4} (unit vectors concentrate at sqrt(2) = {:.4})",
        before.mean,
        before.std,
        std::f64::consts::SQRT_2
    );
    for k in [2usize, 8, 32] {
        let model = full.truncate(k)?;
        let projected: Vec<Vec<f64>> = rows.iter().map(|r| project(&model, r).unwrap()).collect();
        let after = pairwise_distance_stats(&Mat::from_rows(projected)?, 5000, 9)?;
        println!(
            "  after k = {k:>2}: mean {:.4}, std {:.4}  (mean shrank {:.1}%)",
            after.mean,
            after.std,
            100.0 * (1.0 - after.mean / before.mean)
        );
    }
    Ok(())
}
