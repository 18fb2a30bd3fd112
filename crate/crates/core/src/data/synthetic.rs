use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::LabelDistributionDataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Parameters of the planted low-rank plus sparse generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub k_true: usize,
    /// Fraction of nonzero entries in the planted sparse factor.
    pub sparse_density: f64,
    /// Standard deviation of the Gaussian noise added to the logits.
    pub noise: f64,
    /// Multiplier on the planted factors; smaller values give flatter
    /// distributions.
    pub signal_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 200,
            d: 20,
            m: 6,
            k_true: 3,
            sparse_density: 0.05,
            noise: 0.01,
            signal_scale: 0.3,
            seed: 0,
        }
    }
}

/// The factors used to generate a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedModel {
    pub u: Matrix,
    pub v: Matrix,
    pub h: Matrix,
}

/// Draws `X` with standard normal entries and labels
/// `softmax(X U* V* + X H* + noise)`.
///
/// `U*` has entries `N(0, 1/d)`, `V*` entries `N(0, 1/k)` and the nonzero
/// entries of `H*` are `N(0, 1)`, with `U*` and `H*` multiplied by
/// `signal_scale`. The stream is ChaCha8 seeded from `seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(LabelDistributionDataset, PlantedModel)> {
    let SyntheticSpec { n, d, m, k_true: k, .. } = *spec;
    if n == 0 || d == 0 || m == 0 {
        return Err(Error::BadShape(format!("n, d, m must be positive (n={n}, d={d}, m={m})")));
    }
    if k == 0 || k > d.min(m) {
        return Err(Error::BadShape(format!("k_true = {k} must lie in 1..={}", d.min(m))));
    }
    if !(0.0..=1.0).contains(&spec.sparse_density) {
        return Err(Error::BadShape(format!("sparse_density {} outside [0, 1]", spec.sparse_density)));
    }
    if !(spec.noise >= 0.0) || !spec.noise.is_finite() {
        return Err(Error::BadShape(format!("noise {} must be finite and nonnegative", spec.noise)));
    }
    if !(spec.signal_scale > 0.0) || !spec.signal_scale.is_finite() {
        return Err(Error::BadShape(format!("signal_scale {} must be positive", spec.signal_scale)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    let mut x = Matrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            x[(i, j)] = normal(&mut rng);
        }
    }
    let su = spec.signal_scale / (d as f64).sqrt();
    let sv = 1.0 / (k as f64).sqrt();
    let mut u = Matrix::zeros(d, k);
    for i in 0..d {
        for j in 0..k {
            u[(i, j)] = su * normal(&mut rng);
        }
    }
    let mut v = Matrix::zeros(k, m);
    for i in 0..k {
        for j in 0..m {
            v[(i, j)] = sv * normal(&mut rng);
        }
    }
    let mut h = Matrix::zeros(d, m);
    for i in 0..d {
        for j in 0..m {
            let keep = rng.random::<f64>() < spec.sparse_density;
            let value = normal(&mut rng);
            if keep {
                h[(i, j)] = spec.signal_scale * value;
            }
        }
    }
    let mut logits = &x * &u * &v + &x * &h;
    for i in 0..n {
        for j in 0..m {
            logits[(i, j)] += spec.noise * normal(&mut rng);
        }
    }
    let mut labels = logits;
    for i in 0..n {
        let mut row = labels.row_mut(i);
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let s = row.sum();
        row /= s;
    }
    let ds = LabelDistributionDataset::new(x, labels, None)?;
    Ok((ds, PlantedModel { u, v, h }))
}
