use rayon::prelude::*;

use super::{ModelParams, Problem};
use crate::error::{Error, Result};
use crate::linalg::{spd_condition, Matrix, Vector};

/// Masked least squares `min_W ½ ||Ω ⊙ (XW - D̃)||² + ridge ||W||²`, solved
/// column by column over each label's observed rows. Stored as `U = W`,
/// `V = I`, `H = 0`.
pub fn fit_baseline(problem: &Problem, ridge: f64) -> Result<ModelParams> {
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::InvalidHyperparams {
            field: "ridge",
            message: format!("must be finite and nonnegative, got {ridge}"),
        });
    }
    let (d, m) = (problem.d(), problem.m());
    let columns: Result<Vec<Vector>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let w = problem.omega.column(j);
            let weighted = Matrix::from_fn(problem.n(), d, |i, a| w[i] * problem.x[(i, a)]);
            let mut gram = weighted.tr_mul(&problem.x);
            for a in 0..d {
                gram[(a, a)] += 2.0 * ridge;
            }
            let rhs = weighted.tr_mul(&problem.dtilde.column(j));
            if ridge == 0.0 {
                let cond = spd_condition(&gram);
                if cond * f64::EPSILON >= 1.0 {
                    return Err(Error::SingularSystem { condition: cond });
                }
            }
            gram.clone()
                .cholesky()
                .map(|c| c.solve(&rhs))
                .ok_or_else(|| Error::SingularSystem { condition: spd_condition(&gram) })
        })
        .collect();
    let columns = columns?;
    let mut w = Matrix::zeros(d, m);
    for (j, col) in columns.iter().enumerate() {
        w.set_column(j, col);
    }
    Ok(ModelParams {
        u: w,
        v: Matrix::identity(m, m),
        h: Matrix::zeros(d, m),
    })
}
