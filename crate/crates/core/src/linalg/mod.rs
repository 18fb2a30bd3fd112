//! Dense kernels used by the solver: Sylvester equations, ridge-regularized
//! normal equations, the cone-constrained back-map and soft thresholding.

mod nnls;
mod sylvester;

pub use nnls::nnls;
pub use sylvester::{solve_sylvester, solve_sylvester_kronecker, KRONECKER_FALLBACK_LIMIT};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense column-major matrix of `f64`.
pub type Matrix = DMatrix<f64>;
/// Dense column vector of `f64`.
pub type Vector = DVector<f64>;

/// Builds a matrix from entries in row-major order, rejecting empty shapes and
/// non-finite values.
pub fn dense(rows: usize, cols: usize, row_major: &[f64]) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyMatrix { rows, cols });
    }
    if row_major.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            context: "dense",
            expected: format!("{} entries", rows * cols),
            found: format!("{} entries", row_major.len()),
        });
    }
    let m = Matrix::from_row_slice(rows, cols, row_major);
    check_finite(&m)?;
    Ok(m)
}

/// Returns the first non-finite entry as an error.
pub fn check_finite(m: &Matrix) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Condition number of a symmetric positive semidefinite matrix, computed from
/// its eigenvalues. Returns infinity when the smallest eigenvalue is not positive.
pub fn spd_condition(gram: &Matrix) -> f64 {
    let eig = nalgebra::SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Extra ridge added to a Gram matrix whose condition estimate exceeds `1e12`:
/// `1e-8 * trace / d`, else zero.
pub fn numerical_ridge(gram: &Matrix) -> f64 {
    if spd_condition(gram) > 1e12 {
        1e-8 * gram.trace() / gram.nrows() as f64
    } else {
        0.0
    }
}

/// Solves `min_H ||X H - M||_F^2 + ridge ||H||_F^2`, i.e.
/// `H = (XᵀX + ridge I)⁻¹ XᵀM`.
///
/// With `ridge == 0` the Gram matrix must be numerically nonsingular.
pub fn solve_ridge_normal(x: &Matrix, m: &Matrix, ridge: f64) -> Result<Matrix> {
    if x.nrows() != m.nrows() {
        return Err(Error::DimensionMismatch {
            context: "solve_ridge_normal",
            expected: format!("{} rows in M", x.nrows()),
            found: format!("{}", m.nrows()),
        });
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::InvalidHyperparams {
            field: "ridge",
            message: format!("must be finite and nonnegative, got {ridge}"),
        });
    }
    let d = x.ncols();
    let mut gram = x.tr_mul(x);
    if ridge == 0.0 {
        let cond = spd_condition(&gram);
        if cond * f64::EPSILON >= 1.0 {
            return Err(Error::SingularSystem { condition: cond });
        }
    }
    for i in 0..d {
        gram[(i, i)] += ridge;
    }
    let rhs = x.tr_mul(m);
    match gram.clone().cholesky() {
        Some(ch) => Ok(ch.solve(&rhs)),
        None => Err(Error::SingularSystem {
            condition: spd_condition(&gram),
        }),
    }
}

/// Solves `min_H ||X H - M||_F^2 + ridge ||H||_F^2` subject to `X H >= 0`
/// elementwise, column by column.
///
/// Each column is a projection onto a polyhedral cone after the change of
/// variables `y = Lᵀh` with `L Lᵀ = XᵀX + ridge I`; the projection is computed
/// through its dual, a non-negative least-squares problem. When the
/// unconstrained solution already has `X H >= 0` this coincides with
/// [`solve_ridge_normal`].
pub fn solve_ridge_nonneg_image(x: &Matrix, m: &Matrix, ridge: f64) -> Result<Matrix> {
    if x.nrows() != m.nrows() {
        return Err(Error::DimensionMismatch {
            context: "solve_ridge_nonneg_image",
            expected: format!("{} rows in M", x.nrows()),
            found: format!("{}", m.nrows()),
        });
    }
    if !(ridge > 0.0) || !ridge.is_finite() {
        return Err(Error::InvalidHyperparams {
            field: "ridge",
            message: format!("must be finite and positive, got {ridge}"),
        });
    }
    let d = x.ncols();
    let mut gram = x.tr_mul(x);
    for i in 0..d {
        gram[(i, i)] += ridge;
    }
    let chol = gram.clone().cholesky().ok_or(Error::SingularSystem {
        condition: spd_condition(&gram),
    })?;
    let l = chol.l();
    // Aᵀ = L⁻¹ Xᵀ, so the constraint X h >= 0 reads A y >= 0.
    let at = l
        .solve_lower_triangular(&x.transpose())
        .expect("Cholesky factor has a positive diagonal");
    let xtm = x.tr_mul(m);
    let y0_all = l
        .solve_lower_triangular(&xtm)
        .expect("Cholesky factor has a positive diagonal");
    let lt = l.transpose();
    let mut h = Matrix::zeros(d, m.ncols());
    for j in 0..m.ncols() {
        let y0 = y0_all.column(j).into_owned();
        let image = at.tr_mul(&y0);
        let scale = image.amax().max(1.0);
        let y = if image.min() >= -1e-14 * scale {
            y0
        } else {
            let lambda = nnls(&at, &(-&y0))?;
            &y0 + &at * lambda
        };
        let col = lt
            .solve_upper_triangular(&y)
            .expect("Cholesky factor has a positive diagonal");
        h.set_column(j, &col);
    }
    Ok(h)
}

/// Elementwise soft thresholding `sign(x) max(|x| - lambda, 0)`.
pub fn soft_threshold(x: &Matrix, lambda: f64) -> Result<Matrix> {
    if lambda < 0.0 || lambda.is_nan() {
        return Err(Error::NegativeThreshold(lambda));
    }
    if lambda == 0.0 {
        return Ok(x.clone());
    }
    Ok(x.map(|v| v.signum() * (v.abs() - lambda).max(0.0)))
}
