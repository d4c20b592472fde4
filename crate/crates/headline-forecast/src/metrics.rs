//! Evaluation and diagnostic statistics: MSE, R², SMAPE, signal-to-noise
//! ratio and Shannon entropy.
//!
//! SMAPE here is the symmetric form bounded in [0, 200]: the absolute
//! residual scaled by the mean of |actual| and |predicted|, expressed as a
//! percentage. A pair with both values exactly zero contributes zero
//! (perfect agreement rather than a 0/0).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-run evaluation summary over the train and test splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub train_mse: f64,
    pub test_mse: f64,
    pub train_smape: f64,
    pub test_smape: f64,
    pub train_r2: f64,
    pub test_r2: f64,
}

impl MetricsReport {
    pub fn from_predictions(
        y_train: &[f64],
        yhat_train: &[f64],
        y_test: &[f64],
        yhat_test: &[f64],
    ) -> Result<Self> {
        Ok(MetricsReport {
            train_mse: mse(y_train, yhat_train)?,
            test_mse: mse(y_test, yhat_test)?,
            train_smape: smape(y_train, yhat_train)?,
            test_smape: smape(y_test, yhat_test)?,
            train_r2: r2(y_train, yhat_train)?,
            test_r2: r2(y_test, yhat_test)?,
        })
    }

    pub fn all_finite(&self) -> bool {
        [
            self.train_mse,
            self.test_mse,
            self.train_smape,
            self.test_smape,
            self.train_r2,
            self.test_r2,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

fn check_pair(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::Param("metric over empty vectors".into()));
    }
    if y.len() != yhat.len() {
        return Err(Error::Param(format!(
            "metric length mismatch: {} vs {}",
            y.len(),
            yhat.len()
        )));
    }
    Ok(())
}

/// Mean squared error.
pub fn mse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let sum: f64 = y
        .iter()
        .zip(yhat)
        .map(|(&a, &p)| (a - p) * (a - p))
        .sum();
    Ok(sum / y.len() as f64)
}

/// Coefficient of determination, 1 - SS_res / SS_tot.
///
/// Errors when `y` is constant (zero total sum of squares).
pub fn r2(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    if y.len() < 2 {
        return Err(Error::Param("r2 requires at least 2 observations".into()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|&a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Numeric("r2 undefined for constant targets".into()));
    }
    let ss_res: f64 = y
        .iter()
        .zip(yhat)
        .map(|(&a, &p)| (a - p) * (a - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Symmetric mean absolute percentage error in [0, 200].
pub fn smape(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let sum: f64 = y
        .iter()
        .zip(yhat)
        .map(|(&a, &p)| {
            let denom = (a.abs() + p.abs()) / 2.0;
            if denom == 0.0 {
                0.0
            } else {
                (a - p).abs() / denom
            }
        })
        .sum();
    Ok(100.0 * sum / y.len() as f64)
}

/// Signal-to-noise ratio: |mean| over sample standard deviation.
pub fn snr(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::Param("snr requires at least 2 observations".into()));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Err(Error::Numeric("snr undefined for zero-variance series".into()));
    }
    Ok(mean.abs() / var.sqrt())
}

/// Binning convention for [`shannon_entropy`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binning {
    /// Each distinct value (exact bit pattern) is its own bin.
    Distinct,
    /// Fixed-width bins of the given positive width, anchored at the minimum.
    FixedWidth(f64),
}

/// Shannon entropy in bits over the empirical bin frequencies.
pub fn shannon_entropy(series: &[f64], binning: Binning) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::Param("entropy over empty series".into()));
    }
    let mut counts: std::collections::HashMap<u64, usize> = std::collections::HashMap::new();
    match binning {
        Binning::Distinct => {
            for &x in series {
                *counts.entry(x.to_bits()).or_insert(0) += 1;
            }
        }
        Binning::FixedWidth(w) => {
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::Param(format!("non-positive bin width {w}")));
            }
            let min = series.iter().cloned().fold(f64::INFINITY, f64::min);
            for &x in series {
                let bin = ((x - min) / w).floor() as u64;
                *counts.entry(bin).or_insert(0) += 1;
            }
        }
    }
    let n = series.len() as f64;
    let mut bits = 0.0;
    for &c in counts.values() {
        let p = c as f64 / n;
        bits -= p * p.log2();
    }
    Ok(bits)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Independent accumulation-loop oracles, kept free of the iterator
    // implementations above.
    fn mse_oracle(y: &[f64], yhat: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..y.len() {
            let d = y[i] - yhat[i];
            acc += d * d;
        }
        acc / y.len() as f64
    }

    fn r2_oracle(y: &[f64], yhat: &[f64]) -> f64 {
        let mut mean = 0.0;
        for i in 0..y.len() {
            mean += y[i];
        }
        mean /= y.len() as f64;
        let mut ss_res = 0.0;
        let mut ss_tot = 0.0;
        for i in 0..y.len() {
            ss_res += (y[i] - yhat[i]) * (y[i] - yhat[i]);
            ss_tot += (y[i] - mean) * (y[i] - mean);
        }
        1.0 - ss_res / ss_tot
    }

    fn smape_oracle(y: &[f64], yhat: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..y.len() {
            let denom = (y[i].abs() + yhat[i].abs()) / 2.0;
            if denom > 0.0 {
                acc += (y[i] - yhat[i]).abs() / denom;
            }
        }
        100.0 / y.len() as f64 * acc
    }

    fn random_pair(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let yhat: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
        (y, yhat)
    }

    #[test]
    fn mse_basics() {
        let y = vec![1.0, 2.0, 3.0];
        assert_eq!(mse(&y, &y).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert!(mse(&[], &[]).is_err());
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mse_matches_oracle_on_random_vectors() {
        for seed in 0..20 {
            let (y, yhat) = random_pair(seed, 1000);
            assert!((mse(&y, &yhat).unwrap() - mse_oracle(&y, &yhat)).abs() < 1e-12);
        }
    }

    #[test]
    fn r2_basics() {
        let y = vec![1.0, 2.0, 3.0];
        assert!((r2(&y, &y).unwrap() - 1.0).abs() < 1e-15);
        let mean = vec![2.0, 2.0, 2.0];
        assert!(r2(&y, &mean).unwrap().abs() < 1e-15);
        // SS_res = 0.25 + 0 + 0.25 = 0.5, SS_tot = 2 -> 0.75
        let yhat = vec![1.5, 2.0, 2.5];
        assert!((r2(&y, &yhat).unwrap() - 0.75).abs() < 1e-15);
        assert!(r2(&[5.0, 5.0], &[5.0, 5.0]).is_err());
    }

    #[test]
    fn r2_matches_oracle_on_random_vectors() {
        for seed in 20..40 {
            let (y, yhat) = random_pair(seed, 1000);
            assert!((r2(&y, &yhat).unwrap() - r2_oracle(&y, &yhat)).abs() < 1e-12);
        }
    }

    #[test]
    fn smape_basics() {
        assert_eq!(smape(&[3.0, 7.0], &[3.0, 7.0]).unwrap(), 0.0);
        assert_eq!(smape(&[1.0], &[0.0]).unwrap(), 200.0);
        assert!((smape(&[100.0], &[110.0]).unwrap() - 9.523809523809524).abs() < 1e-9);
        // Both-zero pairs contribute nothing.
        assert_eq!(smape(&[0.0, 1.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn smape_matches_oracle_and_stays_bounded() {
        for seed in 40..60 {
            let (y, yhat) = random_pair(seed, 1000);
            let s = smape(&y, &yhat).unwrap();
            assert!((s - smape_oracle(&y, &yhat)).abs() < 1e-9);
            assert!((0.0..=200.0).contains(&s));
        }
    }

    #[test]
    fn smape_symmetry_and_scale_invariance() {
        let (y, yhat) = random_pair(99, 500);
        assert_eq!(smape(&y, &yhat).unwrap(), smape(&yhat, &y).unwrap());
        let c = 37.5;
        let cy: Vec<f64> = y.iter().map(|v| c * v).collect();
        let cyhat: Vec<f64> = yhat.iter().map(|v| c * v).collect();
        assert!((smape(&cy, &cyhat).unwrap() - smape(&y, &yhat).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn r2_translation_invariance() {
        let (y, yhat) = random_pair(123, 500);
        let c = 1234.5;
        let ty: Vec<f64> = y.iter().map(|v| v + c).collect();
        let tyhat: Vec<f64> = yhat.iter().map(|v| v + c).collect();
        assert!((r2(&ty, &tyhat).unwrap() - r2(&y, &yhat).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn mse_symmetry_and_nonnegativity() {
        let (y, yhat) = random_pair(7, 300);
        assert_eq!(mse(&y, &yhat).unwrap(), mse(&yhat, &y).unwrap());
        assert!(mse(&y, &yhat).unwrap() > 0.0);
        assert_eq!(mse(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn snr_basics() {
        let alternating: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(snr(&alternating).unwrap(), 0.0);
        assert!(snr(&[3.0, 3.0, 3.0]).is_err());

        // Mean 10 with unit-ish noise lands near 10.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let series: Vec<f64> = (0..20000)
            .map(|_| {
                // Box-Muller standard normal around 10.
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                10.0 + (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let s = snr(&series).unwrap();
        assert!((s - 10.0).abs() < 0.3, "snr {s}");
    }

    #[test]
    fn entropy_uniform_and_distinct() {
        // 2^k equally frequent values -> k bits.
        let series: Vec<f64> = (0..8).flat_map(|v| std::iter::repeat_n(v as f64, 10)).collect();
        assert!((shannon_entropy(&series, Binning::Distinct).unwrap() - 3.0).abs() < 1e-12);

        // n all-distinct values -> log2(n).
        let distinct: Vec<f64> = (0..5800).map(|i| i as f64 * 0.1).collect();
        let bits = shannon_entropy(&distinct, Binning::Distinct).unwrap();
        assert!((bits - (5800f64).log2()).abs() < 1e-9);
        assert!((bits - 12.50).abs() < 0.01);
    }

    #[test]
    fn entropy_fixed_width_and_errors() {
        let series = vec![0.0, 0.1, 0.2, 1.0, 1.1, 1.2];
        let bits = shannon_entropy(&series, Binning::FixedWidth(0.5)).unwrap();
        assert!((bits - 1.0).abs() < 1e-12);
        assert!(shannon_entropy(&series, Binning::FixedWidth(0.0)).is_err());
        assert!(shannon_entropy(&[], Binning::Distinct).is_err());
    }

    #[test]
    fn entropy_permutation_invariant_and_maximal_for_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut series: Vec<f64> = (0..64).map(|i| (i % 16) as f64).collect();
        let before = shannon_entropy(&series, Binning::Distinct).unwrap();
        for i in (1..series.len()).rev() {
            let j = rng.gen_range(0..=i);
            series.swap(i, j);
        }
        assert_eq!(shannon_entropy(&series, Binning::Distinct).unwrap(), before);

        // Uniform occupancy beats any skewed occupancy over the same bins.
        let skewed: Vec<f64> = (0..64).map(|i| if i < 49 { 0.0 } else { (i % 16) as f64 }).collect();
        assert!(shannon_entropy(&skewed, Binning::Distinct).unwrap() < before);
    }
}
