use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Non-negative least squares `min ||E x - f||_2` subject to `x >= 0`
/// (Lawson–Hanson active set).
pub fn nnls(e: &DMatrix<f64>, f: &DVector<f64>) -> Result<DVector<f64>> {
    let n = e.ncols();
    let norm1 = (0..n)
        .map(|j| e.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let tol = 10.0 * f64::EPSILON * norm1 * (e.nrows().max(n) as f64);
    let max_outer = 3 * n + 10;

    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let mut blocked = vec![false; n];
    let mut w = e.tr_mul(&(f - e * &x));

    for _ in 0..max_outer {
        let candidate = (0..n)
            .filter(|&j| !passive[j] && !blocked[j] && w[j] > tol)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(t) = candidate else {
            return Ok(x);
        };
        passive[t] = true;

        for inner in 0..=n {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let s_p = least_squares(e, f, &idx);
            if idx.iter().zip(s_p.iter()).all(|(_, &v)| v > 0.0) {
                for (&j, &v) in idx.iter().zip(s_p.iter()) {
                    x[j] = v;
                }
                break;
            }
            if inner == 0 && s_p[idx.iter().position(|&j| j == t).unwrap()] <= 0.0 {
                // The entering column cannot move off zero; skip it until
                // the passive set changes.
                passive[t] = false;
                blocked[t] = true;
                break;
            }
            let mut alpha = f64::INFINITY;
            for (&j, &v) in idx.iter().zip(s_p.iter()) {
                if v <= 0.0 {
                    alpha = alpha.min(x[j] / (x[j] - v));
                }
            }
            for (&j, &v) in idx.iter().zip(s_p.iter()) {
                x[j] += alpha * (v - x[j]);
            }
            for &j in &idx {
                if x[j] <= tol {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if inner == n {
                return Err(Error::NnlsStalled(max_outer));
            }
        }
        if !blocked[t] {
            blocked.iter_mut().for_each(|b| *b = false);
        }
        w = e.tr_mul(&(f - e * &x));
    }
    Err(Error::NnlsStalled(max_outer))
}

fn least_squares(e: &DMatrix<f64>, f: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    let sub = e.select_columns(idx);
    let svd = sub.svd(true, true);
    let eps = 1e-13 * svd.singular_values.max();
    svd.solve(f, eps).expect("SVD computed with both factors")
}
