//! Label distribution learning from training labels that are both incomplete
//! (entries missing at random) and imbalanced (long-tailed label mass).
//!
//! The predictor is linear, `X U V + X H`, with a rank-`k` term for the common
//! structure and a sparse term for rare labels, fitted by ADMM with simplex
//! constraints on the predicted rows. The crate also provides the evaluation
//! protocol: synthetic data, masking, imbalance induction, splits, the six
//! standard distribution measures, and an experiment harness.
//!
//! ```
//! use i2ldl::data::{generate_synthetic, make_mask, with_bias_column, SyntheticSpec};
//! use i2ldl::solver::{fit, predict, Hyperparams, Problem};
//!
//! let (ds, _) = generate_synthetic(&SyntheticSpec { n: 60, seed: 1, ..Default::default() })?;
//! let mask = make_mask(ds.n(), ds.m(), 0.5, 1)?;
//! let x = with_bias_column(&ds.features);
//! let problem = Problem::new(x.clone(), mask.apply(&ds.labels), mask.omega)?;
//! let report = fit(&problem, &Hyperparams::default(), 1)?;
//! let pred = predict(&report.params, &x)?;
//! assert_eq!(pred.shape(), (60, 6));
//! # Ok::<(), i2ldl::Error>(())
//! ```

pub mod data;
mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod simplex_qp;
pub mod solver;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/row-qp.md")]
    mod row_qp {}
    #[doc = include_str!("../../../book/src/sylvester.md")]
    mod sylvester {}
    #[doc = include_str!("../../../book/src/admm.md")]
    mod admm {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
