use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Binary observation pattern over an n×m label matrix (1 = observed).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMask {
    pub omega: Matrix,
    /// Requested missing rate.
    pub missing_rate: f64,
    /// Rows that were left fully unobserved by the random draw and had one
    /// entry restored.
    pub restored_rows: usize,
}

impl ObservationMask {
    pub fn all_observed(n: usize, m: usize) -> Self {
        Self {
            omega: Matrix::from_element(n, m, 1.0),
            missing_rate: 0.0,
            restored_rows: 0,
        }
    }

    pub fn zeros(&self) -> usize {
        self.omega.iter().filter(|v| **v == 0.0).count()
    }

    /// Fraction of unobserved entries.
    pub fn zero_fraction(&self) -> f64 {
        self.zeros() as f64 / self.omega.len() as f64
    }

    /// Zero-filled observed labels `Ω ⊙ D`.
    pub fn apply(&self, labels: &Matrix) -> Matrix {
        labels.component_mul(&self.omega)
    }
}

/// Drops `round(omega * n * m)` entries uniformly at random. A row left with no
/// observed entry gets one entry restored and an entry of some row with at
/// least two observations is dropped instead, so the count is exact.
///
/// The stream is ChaCha8 seeded from `seed`.
pub fn make_mask(n: usize, m: usize, omega: f64, seed: u64) -> Result<ObservationMask> {
    if n == 0 || m == 0 {
        return Err(Error::BadShape(format!("mask shape {n}x{m}")));
    }
    let max = 1.0 - 1.0 / m as f64;
    if !(omega >= 0.0) || omega > max + 1e-12 {
        return Err(Error::RateTooHigh { omega, max, m });
    }
    let total = n * m;
    let zeros = ((omega * total as f64).round() as usize).min(n * (m - 1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut observed = vec![true; total];
    for idx in sample(&mut rng, total, zeros).into_iter() {
        observed[idx] = false;
    }
    let mut per_row: Vec<usize> = (0..n)
        .map(|i| observed[i * m..(i + 1) * m].iter().filter(|o| **o).count())
        .collect();
    let mut restored_rows = 0;
    for i in 0..n {
        if per_row[i] > 0 {
            continue;
        }
        let j = rng.random_range(0..m);
        observed[i * m + j] = true;
        per_row[i] = 1;
        restored_rows += 1;
        let candidates: Vec<usize> = (0..total)
            .filter(|&p| observed[p] && per_row[p / m] >= 2)
            .collect();
        let drop = candidates[rng.random_range(0..candidates.len())];
        observed[drop] = false;
        per_row[drop / m] -= 1;
    }
    let omega_matrix = Matrix::from_fn(n, m, |i, j| if observed[i * m + j] { 1.0 } else { 0.0 });
    Ok(ObservationMask {
        omega: omega_matrix,
        missing_rate: omega,
        restored_rows,
    })
}
