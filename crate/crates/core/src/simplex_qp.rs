//! Diagonal-Hessian quadratic programs over a scaled simplex.
//!
//! A row problem minimizes `½ Σ q_j x_j² + Σ ℓ_j x_j` subject to `Σ x_j = c`
//! and `x >= 0`. Its KKT conditions give `x_j(ν) = max(0, (ν - ℓ_j) / q_j)`,
//! and `Σ x_j(ν)` is nondecreasing in `ν`, so the multiplier is found by
//! bisection.

use crate::error::{Error, Result};

/// Default tolerance on the sum residual during bisection.
pub const DEFAULT_TOL: f64 = 1e-12;
/// Maximum number of bisection steps.
pub const MAX_BISECTION_STEPS: usize = 200;

/// One row problem: `½ Σ q_j x_j² + Σ ℓ_j x_j`, `Σ x_j = c`, `x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowQpInstance {
    pub q: Vec<f64>,
    pub ell: Vec<f64>,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowQpSolution {
    pub x: Vec<f64>,
    pub nu: f64,
    pub objective: f64,
}

impl RowQpInstance {
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.q
            .iter()
            .zip(&self.ell)
            .zip(x)
            .map(|((q, l), x)| 0.5 * q * x * x + l * x)
            .sum()
    }
}

/// Clamps a target sum into `[0, 1]`, reporting whether clamping occurred.
pub fn clamp_target(raw: f64) -> (f64, bool) {
    let c = raw.clamp(0.0, 1.0);
    (c, c != raw)
}

/// Solves a row problem by bisection on the multiplier of the sum constraint,
/// then rescales the positive support so the sum holds exactly.
pub fn solve_row_qp(inst: &RowQpInstance, tol: f64) -> Result<RowQpSolution> {
    let m = inst.q.len();
    if inst.ell.len() != m {
        return Err(Error::LengthMismatch(m, inst.ell.len()));
    }
    if m == 0 {
        return Err(Error::EmptyVector);
    }
    for (index, &value) in inst.q.iter().enumerate() {
        if !(value > 0.0) {
            return Err(Error::NonPositiveHessian { index, value });
        }
    }
    if inst.c < -tol {
        return Err(Error::InfeasibleTarget(inst.c));
    }
    let c = inst.c.max(0.0);
    let lo0 = inst.ell.iter().copied().fold(f64::INFINITY, f64::min);
    if c == 0.0 {
        return Ok(RowQpSolution {
            x: vec![0.0; m],
            nu: lo0,
            objective: 0.0,
        });
    }
    let hi0 = inst
        .q
        .iter()
        .zip(&inst.ell)
        .map(|(q, l)| l + q * c)
        .fold(f64::NEG_INFINITY, f64::max);
    let mass = |nu: f64| -> f64 {
        inst.q
            .iter()
            .zip(&inst.ell)
            .map(|(q, l)| ((nu - l) / q).max(0.0))
            .sum()
    };
    let (mut lo, mut hi) = (lo0, hi0);
    let mut nu = 0.5 * (lo + hi);
    for _ in 0..MAX_BISECTION_STEPS {
        nu = 0.5 * (lo + hi);
        let s = mass(nu);
        if (s - c).abs() <= tol || nu <= lo || nu >= hi {
            break;
        }
        if s < c {
            lo = nu;
        } else {
            hi = nu;
        }
    }
    let mut x: Vec<f64> = inst
        .q
        .iter()
        .zip(&inst.ell)
        .map(|(q, l)| ((nu - l) / q).max(0.0))
        .collect();
    let s: f64 = x.iter().sum();
    if s > 0.0 {
        let scale = c / s;
        x.iter_mut().for_each(|v| *v *= scale);
    } else {
        let j = (0..m)
            .min_by(|&a, &b| inst.ell[a].total_cmp(&inst.ell[b]))
            .unwrap_or(0);
        x[j] = c;
    }
    let objective = inst.objective(&x);
    Ok(RowQpSolution { x, nu, objective })
}

/// Euclidean projection of `y` onto the probability simplex.
pub fn project_to_simplex(y: &[f64]) -> Result<Vec<f64>> {
    let inst = RowQpInstance {
        q: vec![1.0; y.len()],
        ell: y.iter().map(|v| -v).collect(),
        c: 1.0,
    };
    Ok(solve_row_qp(&inst, DEFAULT_TOL)?.x)
}

/// Row problem for the sparse block `M = XH` given the current `Z` row.
///
/// `q_j = Ω_j + μ`, `ℓ_j = Ω_j (z_j - d̃_j) - μ g_j + (Λ₂)_j`,
/// `c = clamp(1 - Σ z_j)`. The returned flag reports whether `c` was clamped.
pub fn assemble_h_instance(
    mask_row: &[f64],
    dtilde_row: &[f64],
    z_row: &[f64],
    g_row: &[f64],
    lambda2_row: &[f64],
    mu: f64,
) -> (RowQpInstance, bool) {
    let q = mask_row.iter().map(|w| w + mu).collect();
    let ell = (0..mask_row.len())
        .map(|j| mask_row[j] * (z_row[j] - dtilde_row[j]) - mu * g_row[j] + lambda2_row[j])
        .collect();
    let (c, clamped) = clamp_target(1.0 - z_row.iter().sum::<f64>());
    (RowQpInstance { q, ell, c }, clamped)
}

/// Row problem for the low-rank auxiliary `Z` given the current `XH` row.
///
/// `q_j = Ω_j + μ`, `ℓ_j = Ω_j ((XH)_j - d̃_j) - μ (XUV)_j - (Λ₁)_j`,
/// `c = clamp(1 - Σ (XH)_j)`.
pub fn assemble_z_instance(
    mask_row: &[f64],
    dtilde_row: &[f64],
    xh_row: &[f64],
    xuv_row: &[f64],
    lambda1_row: &[f64],
    mu: f64,
) -> (RowQpInstance, bool) {
    let q = mask_row.iter().map(|w| w + mu).collect();
    let ell = (0..mask_row.len())
        .map(|j| mask_row[j] * (xh_row[j] - dtilde_row[j]) - mu * xuv_row[j] - lambda1_row[j])
        .collect();
    let (c, clamped) = clamp_target(1.0 - xh_row.iter().sum::<f64>());
    (RowQpInstance { q, ell, c }, clamped)
}

/// Joint row problem over both blocks of one row:
///
/// `min ½ Σ w_j (z_j + m_j - d̃_j)² + μ/2 ||z - a||² + μ/2 ||m - b||²`
/// subject to `z, m >= 0` and `Σ z_j + Σ m_j = c`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRowQp<'a> {
    pub w: &'a [f64],
    pub dtilde: &'a [f64],
    pub a: &'a [f64],
    pub b: &'a [f64],
    pub mu: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedRowQpSolution {
    pub z: Vec<f64>,
    pub m: Vec<f64>,
    pub nu: f64,
    pub objective: f64,
}

impl PairedRowQp<'_> {
    pub fn objective(&self, z: &[f64], m: &[f64]) -> f64 {
        (0..self.w.len())
            .map(|j| self.term(j, z[j], m[j]))
            .sum()
    }

    fn term(&self, j: usize, z: f64, m: f64) -> f64 {
        let r = z + m - self.dtilde[j];
        0.5 * self.w[j] * r * r
            + 0.5 * self.mu * ((z - self.a[j]).powi(2) + (m - self.b[j]).powi(2))
    }

    /// Minimizer of the label-`j` pair for a fixed multiplier `nu`.
    fn pair(&self, j: usize, nu: f64) -> (f64, f64) {
        let (w, mu) = (self.w[j], self.mu);
        let ra = w * self.dtilde[j] + mu * self.a[j] + nu;
        let rb = w * self.dtilde[j] + mu * self.b[j] + nu;
        let lagr = |z: f64, m: f64| self.term(j, z, m) - nu * (z + m);
        let det = mu * (2.0 * w + mu);
        let zi = ((w + mu) * ra - w * rb) / det;
        let mi = ((w + mu) * rb - w * ra) / det;
        if zi >= 0.0 && mi >= 0.0 {
            return (zi, mi);
        }
        let mut best = (0.0, 0.0);
        let mut best_val = lagr(0.0, 0.0);
        for cand in [((ra / (w + mu)).max(0.0), 0.0), (0.0, (rb / (w + mu)).max(0.0))] {
            let v = lagr(cand.0, cand.1);
            if v < best_val {
                best = cand;
                best_val = v;
            }
        }
        best
    }

    fn mass(&self, nu: f64) -> f64 {
        (0..self.w.len())
            .map(|j| {
                let (z, m) = self.pair(j, nu);
                z + m
            })
            .sum()
    }
}

/// Solves a [`PairedRowQp`] by bisection on the sum multiplier.
pub fn solve_paired_row_qp(p: &PairedRowQp<'_>, tol: f64) -> Result<PairedRowQpSolution> {
    let n = p.w.len();
    for len in [p.dtilde.len(), p.a.len(), p.b.len()] {
        if len != n {
            return Err(Error::LengthMismatch(n, len));
        }
    }
    if n == 0 {
        return Err(Error::EmptyVector);
    }
    if !(p.mu > 0.0) {
        return Err(Error::NonPositiveHessian { index: 0, value: p.mu });
    }
    if let Some((index, &value)) = p.w.iter().enumerate().find(|(_, w)| !(**w >= 0.0)) {
        return Err(Error::NonPositiveHessian { index, value });
    }
    if p.c < -tol {
        return Err(Error::InfeasibleTarget(p.c));
    }
    let c = p.c.max(0.0);
    // Below `lo` every pair sits at the origin.
    let thresholds = (0..n).flat_map(|j| {
        let base = -p.w[j] * p.dtilde[j];
        [base - p.mu * p.a[j], base - p.mu * p.b[j]]
    });
    let (lo0, top) = thresholds.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
        (lo.min(t), hi.max(t))
    });
    let mut lo = lo0;
    if c == 0.0 {
        let z = vec![0.0; n];
        let objective = p.objective(&z, &z);
        return Ok(PairedRowQpSolution {
            m: z.clone(),
            z,
            nu: lo,
            objective,
        });
    }
    let wmax = p.w.iter().copied().fold(0.0, f64::max);
    let mut step = (2.0 * wmax + p.mu) * c + 1.0;
    let mut hi = top + step;
    while p.mass(hi) < c {
        lo = hi;
        step *= 2.0;
        hi = top + step;
        if !hi.is_finite() {
            return Err(Error::InfeasibleTarget(c));
        }
    }
    let mut nu = 0.5 * (lo + hi);
    for _ in 0..MAX_BISECTION_STEPS {
        nu = 0.5 * (lo + hi);
        let s = p.mass(nu);
        if (s - c).abs() <= tol || nu <= lo || nu >= hi {
            break;
        }
        if s < c {
            lo = nu;
        } else {
            hi = nu;
        }
    }
    let (mut z, mut m): (Vec<f64>, Vec<f64>) = (0..n).map(|j| p.pair(j, nu)).unzip();
    let s: f64 = z.iter().sum::<f64>() + m.iter().sum::<f64>();
    if s > 0.0 {
        let scale = c / s;
        z.iter_mut().for_each(|v| *v *= scale);
        m.iter_mut().for_each(|v| *v *= scale);
    }
    let objective = p.objective(&z, &m);
    Ok(PairedRowQpSolution { z, m, nu, objective })
}
