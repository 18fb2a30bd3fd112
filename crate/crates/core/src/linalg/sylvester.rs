use nalgebra::linalg::Schur;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest `p * q` for which the Kronecker-vectorized direct solve is used as a
/// fallback when the Schur path misses its residual target.
pub const KRONECKER_FALLBACK_LIMIT: usize = 400;

/// Solves `A U + U B = C` for `U` (`A` is p×p, `B` is q×q, `C` is p×q).
///
/// Uses a Bartels–Stewart reduction of `A` and `B` to real Schur form. The
/// result is accepted when its backward error is small,
/// `||AU + UB - C||_F <= tol * ((||A||_F + ||B||_F) ||U||_F + ||C||_F)`; for
/// small systems a direct Kronecker solve is tried before giving up.
pub fn solve_sylvester(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    tol: f64,
) -> Result<DMatrix<f64>> {
    check_shapes(a, b, c)?;
    let scale = a.norm() + b.norm();
    let mut best = (f64::INFINITY, 0.0);
    let mut accept = |u: &DMatrix<f64>| {
        if !u.iter().all(|v| v.is_finite()) {
            return false;
        }
        let r = residual(a, b, c, u);
        let target = tol * (scale * u.norm() + c.norm());
        if r <= target {
            return true;
        }
        if r < best.0 {
            best = (r, target);
        }
        false
    };
    if let Some(u) = bartels_stewart(a, b, c) {
        if accept(&u) {
            return Ok(u);
        }
    }
    if a.nrows() * b.nrows() <= KRONECKER_FALLBACK_LIMIT {
        if let Some(u) = kronecker(a, b, c) {
            if accept(&u) {
                return Ok(u);
            }
        }
    }
    Err(Error::SingularPencil {
        residual: best.0,
        target: best.1,
    })
}

/// Solves `A U + U B = C` through the vectorized system
/// `(I_q ⊗ A + Bᵀ ⊗ I_p) vec(U) = vec(C)` with an LU factorization.
pub fn solve_sylvester_kronecker(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_shapes(a, b, c)?;
    kronecker(a, b, c).ok_or(Error::SingularPencil {
        residual: f64::INFINITY,
        target: 0.0,
    })
}

fn check_shapes(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<()> {
    let (p, q) = (a.nrows(), b.nrows());
    if !a.is_square() || !b.is_square() || c.shape() != (p, q) || p == 0 || q == 0 {
        return Err(Error::DimensionMismatch {
            context: "solve_sylvester",
            expected: format!("A {p}x{p}, B {q}x{q}, C {p}x{q}"),
            found: format!(
                "A {:?}, B {:?}, C {:?}",
                a.shape(),
                b.shape(),
                c.shape()
            ),
        });
    }
    Ok(())
}

fn residual(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, u: &DMatrix<f64>) -> f64 {
    (a * u + u * b - c).norm()
}

fn kronecker(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let (p, q) = (a.nrows(), b.nrows());
    let mut k = DMatrix::zeros(p * q, p * q);
    for j in 0..q {
        for i in 0..p {
            for l in 0..p {
                k[(j * p + i, j * p + l)] += a[(i, l)];
            }
            for l in 0..q {
                k[(j * p + i, l * p + i)] += b[(l, j)];
            }
        }
    }
    let rhs = DMatrix::from_column_slice(p * q, 1, c.as_slice());
    let sol = k.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(DMatrix::from_column_slice(p, q, sol.as_slice()))
}

fn bartels_stewart(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let (p, q) = (a.nrows(), b.nrows());
    let (qa, ta) = Schur::try_new(a.clone(), f64::EPSILON, 10_000)?.unpack();
    let (qb, tb) = Schur::try_new(b.clone(), f64::EPSILON, 10_000)?.unpack();
    // Ta Y + Y Tb = F with F = Qaᵀ C Qb, then U = Qa Y Qbᵀ.
    let f = qa.tr_mul(c) * &qb;
    let mut y = DMatrix::<f64>::zeros(p, q);
    let identity = DMatrix::<f64>::identity(p, p);
    let mut j = 0;
    while j < q {
        let block = j + 1 < q && is_coupled(&tb, j);
        let mut r0 = f.column(j).into_owned();
        for l in 0..j {
            r0 -= y.column(l) * tb[(l, j)];
        }
        if !block {
            let lhs = &ta + &identity * tb[(j, j)];
            let col = lhs.lu().solve(&r0)?;
            y.set_column(j, &col);
            j += 1;
        } else {
            let mut r1 = f.column(j + 1).into_owned();
            for l in 0..j {
                r1 -= y.column(l) * tb[(l, j + 1)];
            }
            let mut lhs = DMatrix::zeros(2 * p, 2 * p);
            lhs.view_mut((0, 0), (p, p))
                .copy_from(&(&ta + &identity * tb[(j, j)]));
            lhs.view_mut((0, p), (p, p))
                .copy_from(&(&identity * tb[(j + 1, j)]));
            lhs.view_mut((p, 0), (p, p))
                .copy_from(&(&identity * tb[(j, j + 1)]));
            lhs.view_mut((p, p), (p, p))
                .copy_from(&(&ta + &identity * tb[(j + 1, j + 1)]));
            let mut rhs = nalgebra::DVector::zeros(2 * p);
            rhs.rows_mut(0, p).copy_from(&r0);
            rhs.rows_mut(p, p).copy_from(&r1);
            let sol = lhs.lu().solve(&rhs)?;
            y.set_column(j, &sol.rows(0, p));
            y.set_column(j + 1, &sol.rows(p, p));
            j += 2;
        }
    }
    let u = qa * y * qb.transpose();
    if u.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(u)
}

fn is_coupled(t: &DMatrix<f64>, j: usize) -> bool {
    let sub = t[(j + 1, j)].abs();
    sub > f64::EPSILON * (t[(j, j)].abs() + t[(j + 1, j + 1)].abs()).max(f64::MIN_POSITIVE)
}
