use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabelDistributionDataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Record of an imbalance induction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceProfile {
    /// Requested ratio between the largest and smallest label column means.
    pub gamma: f64,
    /// Decay factor actually used. Equals `gamma` unless row renormalization
    /// pulled the achieved ratio below `gamma - 0.5`, in which case it is the
    /// smallest larger factor that reaches `gamma`.
    pub effective_gamma: f64,
    /// Per-label multipliers, indexed by original column.
    pub decay: Vec<f64>,
    /// Labels ordered by decreasing column mean before induction.
    pub order: Vec<usize>,
    /// Ratio of the largest to the smallest nonzero column mean afterwards.
    pub achieved_gamma: f64,
    pub warnings: Vec<String>,
}

const CALIBRATION_CEILING: f64 = 1e8;
const CALIBRATION_STEPS: usize = 100;

/// Scales label column of rank `r` (by decreasing mean) by
/// `g^(-r / (m - 1))` and renormalizes rows onto the simplex.
///
/// `seed` only breaks ties between columns with equal means.
pub fn induce_imbalance(
    ds: &LabelDistributionDataset,
    gamma: f64,
    seed: u64,
) -> Result<(LabelDistributionDataset, ImbalanceProfile)> {
    let m = ds.m();
    if m < 2 {
        return Err(Error::BadShape("imbalance induction needs m >= 2".into()));
    }
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(Error::InvalidHyperparams {
            field: "gamma",
            message: format!("must be finite and greater than 1, got {gamma}"),
        });
    }
    let means = column_means(&ds.labels);
    let mut warnings = Vec::new();
    for (j, mean) in means.iter().enumerate() {
        if *mean == 0.0 {
            warnings.push(format!("label column {j} has zero mean and is excluded from the ratio"));
        }
    }
    if means.iter().filter(|v| **v > 0.0).count() < 2 {
        return Err(Error::DegenerateColumn);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keys: Vec<u64> = (0..m).map(|_| rng.random()).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(keys[a].cmp(&keys[b])));

    let apply = |g: f64| {
        let mut decay = vec![0.0; m];
        for (rank, &j) in order.iter().enumerate() {
            decay[j] = g.powf(-(rank as f64) / (m - 1) as f64);
        }
        let mut labels = ds.labels.clone();
        for (j, w) in decay.iter().enumerate() {
            labels.column_mut(j).scale_mut(*w);
        }
        for i in 0..labels.nrows() {
            let s = labels.row(i).sum();
            labels.row_mut(i).unscale_mut(s);
        }
        let ratio = extreme_ratio(&column_means(&labels));
        (labels, decay, ratio)
    };

    let mut effective_gamma = gamma;
    let mut result = apply(gamma);
    if result.2 < gamma - 0.5 {
        let (mut lo, mut hi) = (gamma.ln(), (gamma * CALIBRATION_CEILING).ln());
        let top = apply(hi.exp());
        if top.2 < gamma {
            warnings.push(format!(
                "ratio {:.3} is the largest reachable on this dataset",
                top.2
            ));
            effective_gamma = hi.exp();
            result = top;
        } else {
            result = top;
            effective_gamma = hi.exp();
            for _ in 0..CALIBRATION_STEPS {
                let mid = 0.5 * (lo + hi);
                let cand = apply(mid.exp());
                if cand.2 >= gamma {
                    hi = mid;
                    effective_gamma = mid.exp();
                    result = cand;
                } else {
                    lo = mid;
                }
                if hi - lo < 1e-9 {
                    break;
                }
            }
        }
    }
    let (labels, decay, achieved_gamma) = result;
    let out = LabelDistributionDataset {
        features: ds.features.clone(),
        labels,
        label_names: ds.label_names.clone(),
        renormalized_rows: 0,
    };
    Ok((
        out,
        ImbalanceProfile {
            gamma,
            effective_gamma,
            decay,
            order,
            achieved_gamma,
            warnings,
        },
    ))
}

fn column_means(labels: &Matrix) -> Vec<f64> {
    let n = labels.nrows() as f64;
    (0..labels.ncols()).map(|j| labels.column(j).sum() / n).collect()
}

fn extreme_ratio(means: &[f64]) -> f64 {
    let positive = means.iter().copied().filter(|v| *v > 0.0);
    let (lo, hi) = positive.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    hi / lo
}
