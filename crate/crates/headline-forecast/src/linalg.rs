//! Dense row-major matrices and a symmetric eigendecomposition.
//!
//! The eigensolver is the classic two-stage reduction: Householder
//! tridiagonalization followed by implicit-shift QL iteration, with the
//! orthogonal transform accumulated so eigenvectors come out directly.
//! O(d^3), fine for the covariance sizes used here (d <= 4096).

#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Param("matrix with zero rows".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Param("ragged rows in matrix".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in &rows {
            data.extend_from_slice(r);
        }
        Ok(Mat {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Param(format!(
                "flat data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Column means.
    pub fn col_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for r in 0..self.rows {
            let row = self.row(r);
            for (m, &v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= self.rows as f64;
        }
        means
    }

    /// Sample covariance (divisor n-1) of the rows.
    pub fn covariance(&self) -> Result<Mat> {
        if self.rows < 2 {
            return Err(Error::Param("covariance requires at least 2 rows".into()));
        }
        let means = self.col_means();
        let d = self.cols;
        let mut cov = Mat::zeros(d, d);
        let mut centered = vec![0.0; d];
        for r in 0..self.rows {
            let row = self.row(r);
            for j in 0..d {
                centered[j] = row[j] - means[j];
            }
            for i in 0..d {
                let ci = centered[i];
                if ci == 0.0 {
                    continue;
                }
                let dest = &mut cov.data[i * d..(i + 1) * d];
                for j in i..d {
                    dest[j] += ci * centered[j];
                }
            }
        }
        let denom = (self.rows - 1) as f64;
        for i in 0..d {
            for j in i..d {
                let v = cov.at(i, j) / denom;
                *cov.at_mut(i, j) = v;
                *cov.at_mut(j, i) = v;
            }
        }
        Ok(cov)
    }
}

/// Eigendecomposition of a real symmetric matrix.
///
/// Returns eigenvalues in ascending order and the matrix whose column `j`
/// holds the unit eigenvector for eigenvalue `j`.
pub fn symmetric_eigen(a: &Mat) -> Result<(Vec<f64>, Mat)> {
    if a.rows != a.cols {
        return Err(Error::Param(format!(
            "symmetric_eigen on non-square {}x{}",
            a.rows, a.cols
        )));
    }
    let n = a.rows;
    let mut v = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;

    // Ascending order, eigenvector columns permuted to match.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            *vectors.at_mut(r, new_col) = v.at(r, old_col);
        }
    }
    Ok((values, vectors))
}

/// Householder reduction of a symmetric matrix to tridiagonal form,
/// accumulating the orthogonal transform in `v`.
fn tred2(v: &mut Mat, d: &mut [f64], e: &mut [f64]) {
    let n = v.rows;
    for j in 0..n {
        d[j] = v.at(n - 1, j);
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v.at(i - 1, j);
                *v.at_mut(i, j) = 0.0;
                *v.at_mut(j, i) = 0.0;
            }
        } else {
            // Generate the Householder vector.
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for j in 0..i {
                e[j] = 0.0;
            }

            // Apply the similarity transformation to the remaining columns.
            for j in 0..i {
                f = d[j];
                *v.at_mut(j, i) = f;
                g = e[j] + v.at(j, j) * f;
                for k in j + 1..i {
                    g += v.at(k, j) * d[k];
                    e[k] += v.at(k, j) * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    *v.at_mut(k, j) -= f * e[k] + g * d[k];
                }
                d[j] = v.at(i - 1, j);
                *v.at_mut(i, j) = 0.0;
            }
        }
        d[i] = h;
    }

    // Accumulate the transformations.
    for i in 0..n - 1 {
        let vii = v.at(i, i);
        *v.at_mut(n - 1, i) = vii;
        *v.at_mut(i, i) = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v.at(k, i + 1) / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v.at(k, i + 1) * v.at(k, j);
                }
                for k in 0..=i {
                    *v.at_mut(k, j) -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            *v.at_mut(k, i + 1) = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v.at(n - 1, j);
        *v.at_mut(n - 1, j) = 0.0;
    }
    *v.at_mut(n - 1, n - 1) = 1.0;
    e[0] = 0.0;
}

/// Implicit-shift QL iteration on the tridiagonal form.
fn tql2(v: &mut Mat, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = v.rows;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let eps = 2.0f64.powi(-52);
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }

        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 64 {
                    return Err(Error::Numeric(
                        "eigendecomposition failed to converge".into(),
                    ));
                }

                // Implicit shift.
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for i in l + 2..n {
                    d[i] -= h;
                }
                f += h;

                // Implicit QL sweep.
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    for k in 0..n {
                        h = v.at(k, i + 1);
                        *v.at_mut(k, i + 1) = s * v.at(k, i) + c * h;
                        *v.at_mut(k, i) = c * v.at(k, i) - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Mat::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.gen_range(-2.0..2.0);
                *a.at_mut(i, j) = v;
                *a.at_mut(j, i) = v;
            }
        }
        a
    }

    #[test]
    fn eigen_2x2_analytic() {
        // [[2, 1], [1, 2]] has eigenvalues 1 and 3.
        let a = Mat::from_rows(vec![vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        // Eigenvector for 3 is (1,1)/sqrt(2) up to sign.
        let ratio = vecs.at(0, 1) / vecs.at(1, 1);
        assert!((ratio - 1.0).abs() < 1e-10);
    }

    #[test]
    fn eigen_residuals_and_orthonormality() {
        for seed in 0..5 {
            let n = 12;
            let a = random_symmetric(n, seed);
            let (vals, vecs) = symmetric_eigen(&a).unwrap();

            // A v_j = lambda_j v_j
            for j in 0..n {
                for i in 0..n {
                    let mut av = 0.0;
                    for k in 0..n {
                        av += a.at(i, k) * vecs.at(k, j);
                    }
                    assert!(
                        (av - vals[j] * vecs.at(i, j)).abs() < 1e-9,
                        "residual too large at ({i},{j})"
                    );
                }
            }

            // V^T V = I
            for i in 0..n {
                for j in 0..n {
                    let mut dot = 0.0;
                    for k in 0..n {
                        dot += vecs.at(k, i) * vecs.at(k, j);
                    }
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-10);
                }
            }

            // Ascending order.
            for j in 1..n {
                assert!(vals[j] >= vals[j - 1]);
            }
        }
    }

    #[test]
    fn eigen_handles_repeated_and_zero_eigenvalues() {
        // diag(0, 0, 5) with a rotation mixed in stays exact.
        let a = Mat::from_rows(vec![
            vec![2.5, 2.5, 0.0],
            vec![2.5, 2.5, 0.0],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        let (vals, _) = symmetric_eigen(&a).unwrap();
        assert!(vals[0].abs() < 1e-12);
        assert!(vals[1].abs() < 1e-12);
        assert!((vals[2] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn covariance_of_perfectly_correlated_columns() {
        // Second column is twice the first: cov = [[v, 2v], [2v, 4v]].
        let x = Mat::from_rows(vec![
            vec![1.0, 2.0],
            vec![2.0, 4.0],
            vec![3.0, 6.0],
        ])
        .unwrap();
        let c = x.covariance().unwrap();
        assert!((c.at(0, 0) - 1.0).abs() < 1e-12);
        assert!((c.at(0, 1) - 2.0).abs() < 1e-12);
        assert!((c.at(1, 1) - 4.0).abs() < 1e-12);
    }
}
