//! Datasets of features paired with label distributions, and the
//! transformations applied to training data: masking, imbalance induction and
//! splitting.

mod imbalance;
mod io;
mod mask;
mod split;
mod synthetic;

pub use imbalance::{induce_imbalance, ImbalanceProfile};
pub use io::{load_dataset, load_mask, load_matrix, save_dataset, save_mask, save_matrix};
pub use mask::{make_mask, ObservationMask};
pub use split::{make_split, SplitPlan};
pub use synthetic::{generate_synthetic, PlantedModel, SyntheticSpec};

use crate::error::{Error, Result};
use crate::linalg::{check_finite, Matrix};

/// Row sums further than this from one are rejected by [`LabelDistributionDataset::new`].
pub const LOAD_SUM_TOLERANCE: f64 = 1e-3;
/// Row sums within this distance of one are kept as they are.
const EXACT_SUM_TOLERANCE: f64 = 1e-12;

/// Features `X` (n×d) paired with label distributions `D` (n×m).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistributionDataset {
    pub features: Matrix,
    pub labels: Matrix,
    pub label_names: Option<Vec<String>>,
    /// Rows whose sums were rescaled onto the simplex during validation.
    pub renormalized_rows: usize,
}

impl LabelDistributionDataset {
    /// Validates shapes and distributions. Rows whose sums are off by at most
    /// [`LOAD_SUM_TOLERANCE`] are rescaled; larger deviations and negative
    /// entries are rejected.
    pub fn new(
        features: Matrix,
        mut labels: Matrix,
        label_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let (n, d) = features.shape();
        let m = labels.ncols();
        if n == 0 || d == 0 || m == 0 {
            return Err(Error::BadShape(format!(
                "need n, d, m >= 1 (got n={n}, d={d}, m={m})"
            )));
        }
        if labels.nrows() != n {
            return Err(Error::ShapeMismatch(format!(
                "{n} feature rows but {} label rows",
                labels.nrows()
            )));
        }
        if let Some(names) = &label_names {
            if names.len() != m {
                return Err(Error::ShapeMismatch(format!(
                    "{} label names for {m} label columns",
                    names.len()
                )));
            }
        }
        check_finite(&features)?;
        check_finite(&labels)?;
        let mut renormalized_rows = 0;
        for i in 0..n {
            let mut row = labels.row_mut(i);
            if let Some(v) = row.iter().find(|v| **v < 0.0) {
                return Err(Error::NotADistribution {
                    row: i,
                    reason: format!("negative entry {v}"),
                });
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > LOAD_SUM_TOLERANCE {
                return Err(Error::NotADistribution {
                    row: i,
                    reason: format!("sums to {s}"),
                });
            }
            if (s - 1.0).abs() > EXACT_SUM_TOLERANCE {
                row /= s;
                renormalized_rows += 1;
            }
        }
        Ok(Self {
            features,
            labels,
            label_names,
            renormalized_rows,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn m(&self) -> usize {
        self.labels.ncols()
    }

    /// Dataset restricted to the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(rows),
            labels: self.labels.select_rows(rows),
            label_names: self.label_names.clone(),
            renormalized_rows: 0,
        }
    }
}

/// Appends a constant column of ones to a feature matrix.
pub fn with_bias_column(x: &Matrix) -> Matrix {
    x.clone().insert_column(x.ncols(), 1.0)
}

/// FNV-1a hash over the bit patterns of the selected rows of `x`.
pub fn row_checksum(x: &Matrix, rows: &[usize]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &i in rows {
        for j in 0..x.ncols() {
            for byte in x[(i, j)].to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
    }
    h
}
