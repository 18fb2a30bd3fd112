//! Distance and similarity measures between label distributions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Floor applied to predicted degrees before evaluating KL divergence.
pub const KL_FLOOR: f64 = 1e-12;
/// Allowed deviation of a distribution's sum from one.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// The six measures in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Chebyshev,
    Clark,
    Canberra,
    Kl,
    Cosine,
    Intersection,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Chebyshev,
        Metric::Clark,
        Metric::Canberra,
        Metric::Kl,
        Metric::Cosine,
        Metric::Intersection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Chebyshev => "chebyshev",
            Metric::Clark => "clark",
            Metric::Canberra => "canberra",
            Metric::Kl => "kl",
            Metric::Cosine => "cosine",
            Metric::Intersection => "intersection",
        }
    }

    /// Distances are better when smaller, similarities when larger.
    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::Cosine | Metric::Intersection)
    }

    /// True when `a` is strictly better than `b` under this metric.
    pub fn better(self, a: f64, b: f64) -> bool {
        if self.higher_is_better() {
            a > b
        } else {
            a < b
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn eval(self, d: &[f64], p: &[f64]) -> Result<f64> {
        match self {
            Metric::Chebyshev => chebyshev(d, p),
            Metric::Clark => clark(d, p),
            Metric::Canberra => canberra(d, p),
            Metric::Kl => kl(d, p),
            Metric::Cosine => cosine(d, p),
            Metric::Intersection => intersection(d, p),
        }
    }
}

fn check(d: &[f64], p: &[f64]) -> Result<()> {
    if d.len() != p.len() {
        return Err(Error::LengthMismatch(d.len(), p.len()));
    }
    if d.is_empty() {
        return Err(Error::EmptyVector);
    }
    for v in [d, p] {
        if let Some(x) = v.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidDistribution(format!("entry {x} is negative or not finite")));
        }
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("sums to {s}")));
        }
    }
    Ok(())
}

/// `max_j |d_j - p_j|`.
pub fn chebyshev(d: &[f64], p: &[f64]) -> Result<f64> {
    check(d, p)?;
    Ok(d.iter().zip(p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// `sqrt(Σ (d_j - p_j)² / (d_j + p_j)²)`; terms with `d_j = p_j = 0` vanish.
pub fn clark(d: &[f64], p: &[f64]) -> Result<f64> {
    check(d, p)?;
    let s: f64 = d
        .iter()
        .zip(p)
        .filter(|(a, b)| *a + *b > 0.0)
        .map(|(a, b)| ((a - b) / (a + b)).powi(2))
        .sum();
    Ok(s.sqrt())
}

/// `Σ |d_j - p_j| / (d_j + p_j)`; terms with `d_j = p_j = 0` vanish.
pub fn canberra(d: &[f64], p: &[f64]) -> Result<f64> {
    check(d, p)?;
    Ok(d.iter()
        .zip(p)
        .filter(|(a, b)| *a + *b > 0.0)
        .map(|(a, b)| (a - b).abs() / (a + b))
        .sum())
}

/// `Σ d_j ln(d_j / p_j)` with `p` floored at [`KL_FLOOR`] and renormalized,
/// and `0 ln 0 = 0` on the truth side.
pub fn kl(d: &[f64], p: &[f64]) -> Result<f64> {
    check(d, p)?;
    let floored: Vec<f64> = p.iter().map(|v| v.max(KL_FLOOR)).collect();
    let total: f64 = floored.iter().sum();
    Ok(d.iter()
        .zip(&floored)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / (b / total)).ln())
        .sum())
}

/// `Σ d_j p_j / (||d|| ||p||)`.
pub fn cosine(d: &[f64], p: &[f64]) -> Result<f64> {
    check(d, p)?;
    let dot: f64 = d.iter().zip(p).map(|(a, b)| a * b).sum();
    let nd = d.iter().map(|a| a * a).sum::<f64>().sqrt();
    let np = p.iter().map(|a| a * a).sum::<f64>().sqrt();
    Ok(dot / (nd * np))
}

/// `Σ min(d_j, p_j)`.
pub fn intersection(d: &[f64], p: &[f64]) -> Result<f64> {
    check(d, p)?;
    Ok(d.iter().zip(p).map(|(a, b)| a.min(*b)).sum())
}

/// Mean and population standard deviation of one measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    /// Population statistics of `values`.
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Summary { mean, std: var.sqrt() }
    }
}

/// Per-measure summaries over the rows of a prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub chebyshev: Summary,
    pub clark: Summary,
    pub canberra: Summary,
    pub kl: Summary,
    pub cosine: Summary,
    pub intersection: Summary,
    pub count: usize,
}

impl MetricReport {
    pub fn get(&self, metric: Metric) -> Summary {
        match metric {
            Metric::Chebyshev => self.chebyshev,
            Metric::Clark => self.clark,
            Metric::Canberra => self.canberra,
            Metric::Kl => self.kl,
            Metric::Cosine => self.cosine,
            Metric::Intersection => self.intersection,
        }
    }

    /// Builds a report from one summary per measure, in [`Metric::ALL`] order.
    pub fn from_summaries(s: [Summary; 6], count: usize) -> MetricReport {
        MetricReport {
            chebyshev: s[0],
            clark: s[1],
            canberra: s[2],
            kl: s[3],
            cosine: s[4],
            intersection: s[5],
            count,
        }
    }

    pub fn means(&self) -> [f64; 6] {
        Metric::ALL.map(|m| self.get(m).mean)
    }
}

/// Evaluates all six measures row by row.
pub fn evaluate(truth: &Matrix, predicted: &Matrix) -> Result<MetricReport> {
    if truth.shape() != predicted.shape() {
        return Err(Error::ShapeMismatch(format!(
            "truth is {:?}, prediction is {:?}",
            truth.shape(),
            predicted.shape()
        )));
    }
    let n = truth.nrows();
    if n == 0 {
        return Err(Error::EmptyVector);
    }
    let mut per_metric = vec![Vec::with_capacity(n); 6];
    for i in 0..n {
        let d: Vec<f64> = truth.row(i).iter().copied().collect();
        let p: Vec<f64> = predicted.row(i).iter().copied().collect();
        for (k, metric) in Metric::ALL.iter().enumerate() {
            per_metric[k].push(metric.eval(&d, &p)?);
        }
    }
    let summaries = [0, 1, 2, 3, 4, 5].map(|k| Summary::of(&per_metric[k]));
    Ok(MetricReport::from_summaries(summaries, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_case() {
        let d = [0.2, 0.3, 0.5];
        assert_eq!(chebyshev(&d, &d).unwrap(), 0.0);
        assert_eq!(clark(&d, &d).unwrap(), 0.0);
        assert_eq!(canberra(&d, &d).unwrap(), 0.0);
        assert!(kl(&d, &d).unwrap().abs() < 1e-12);
        assert!((cosine(&d, &d).unwrap() - 1.0).abs() < 1e-12);
        assert!((intersection(&d, &d).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_pair() {
        let d = [0.5, 0.5];
        let p = [0.4, 0.6];
        assert!((chebyshev(&d, &p).unwrap() - 0.1).abs() < 1e-12);
        assert!((canberra(&d, &p).unwrap() - (0.1 / 0.9 + 0.1 / 1.1)).abs() < 1e-12);
        assert!((intersection(&d, &p).unwrap() - 0.9).abs() < 1e-12);
        let clark_expected = ((0.1f64 / 0.9).powi(2) + (0.1f64 / 1.1).powi(2)).sqrt();
        assert!((clark(&d, &p).unwrap() - clark_expected).abs() < 1e-12);
        let kl_expected = 0.5 * (0.5f64 / 0.4).ln() + 0.5 * (0.5f64 / 0.6).ln();
        assert!((kl(&d, &p).unwrap() - kl_expected).abs() < 1e-12);
    }

    #[test]
    fn disjoint_supports() {
        let d = [1.0, 0.0];
        let p = [0.0, 1.0];
        assert_eq!(intersection(&d, &p).unwrap(), 0.0);
        assert_eq!(cosine(&d, &p).unwrap(), 0.0);
        let expected = (1.0 / (KL_FLOOR / (1.0 + KL_FLOOR))).ln();
        assert!((kl(&d, &p).unwrap() - expected).abs() < 1e-9);
        assert!((kl(&d, &p).unwrap() - 27.631).abs() < 1e-3);
    }

    #[test]
    fn contract_errors() {
        assert!(matches!(chebyshev(&[1.0], &[0.5, 0.5]), Err(Error::LengthMismatch(1, 2))));
        assert!(matches!(chebyshev(&[], &[]), Err(Error::EmptyVector)));
        assert!(matches!(chebyshev(&[0.5, 0.6], &[0.5, 0.5]), Err(Error::InvalidDistribution(_))));
    }

    #[test]
    fn evaluate_examples() {
        let t = Matrix::from_row_slice(2, 2, &[0.5, 0.5, 1.0, 0.0]);
        let same = evaluate(&t, &t).unwrap();
        assert_eq!(same.count, 2);
        assert!((same.cosine.mean - 1.0).abs() < 1e-12 && same.chebyshev.std == 0.0);
        let p = Matrix::from_row_slice(2, 2, &[0.4, 0.6, 0.7, 0.3]);
        let r = evaluate(&t, &p).unwrap();
        assert!((r.chebyshev.mean - 0.2).abs() < 1e-12);
        assert!((r.chebyshev.std - 0.1).abs() < 1e-12);
        let inter = (0.9 + 0.7) / 2.0;
        assert!((r.intersection.mean - inter).abs() < 1e-12);
        let one = evaluate(&t.rows(0, 1).into_owned(), &p.rows(0, 1).into_owned()).unwrap();
        assert_eq!(one.canberra.std, 0.0);
        assert!(matches!(evaluate(&t, &Matrix::zeros(1, 2)), Err(Error::ShapeMismatch(_))));
    }

    fn simplex(raw: Vec<f64>) -> Vec<f64> {
        let s: f64 = raw.iter().sum();
        raw.iter().map(|v| v / s).collect()
    }

    proptest! {
        #[test]
        fn symmetry_and_bounds(
            a in proptest::collection::vec(0.001f64..1.0, 5),
            b in proptest::collection::vec(0.001f64..1.0, 5),
        ) {
            let d = simplex(a);
            let p = simplex(b);
            for m in [Metric::Chebyshev, Metric::Clark, Metric::Canberra, Metric::Cosine, Metric::Intersection] {
                prop_assert!((m.eval(&d, &p).unwrap() - m.eval(&p, &d).unwrap()).abs() < 1e-12);
            }
            prop_assert!(chebyshev(&d, &p).unwrap() <= 1.0);
            prop_assert!(clark(&d, &p).unwrap() <= 5f64.sqrt());
            prop_assert!(canberra(&d, &p).unwrap() <= 5.0);
            let i = intersection(&d, &p).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&i));
            if (i - 1.0).abs() <= 1e-9 {
                prop_assert!(chebyshev(&d, &p).unwrap() <= 1e-8);
            }
            let c = cosine(&d, &p).unwrap();
            prop_assert!(c > 0.0 && c <= 1.0 + 1e-12);
            prop_assert!(kl(&d, &p).unwrap() >= -1e-12);
        }

        #[test]
        fn kl_is_finite_near_zero(eps in 0.0f64..1e-6) {
            let d = [0.5, 0.5, 0.0];
            let p = [1.0 - eps, eps, 0.0];
            let v = kl(&d, &p).unwrap();
            prop_assert!(v.is_finite());
        }
    }

    #[test]
    fn kl_is_asymmetric() {
        let d = [0.7, 0.2, 0.1];
        let p = [0.3, 0.3, 0.4];
        assert!((kl(&d, &p).unwrap() - kl(&p, &d).unwrap()).abs() > 1e-3);
    }
}
