//! Low-rank plus sparse label-distribution model and its ADMM fit.
//!
//! The model predicts `X U V + X H`: `X U V` is a rank-`k` term shared by
//! frequent labels and `X H` a sparse correction for rare ones. Fitting
//! minimizes
//!
//! ```text
//! ½ ||Ω ⊙ (XUV + XH - D̃)||² + λ₁ (||U||² + ||V||²) + λ₂ ||H||² + λ₃ ||XH||₁
//! ```
//!
//! subject to `(Z + XH) 1 = 1`, `Z >= 0`, `XH >= 0`, where `Z` and `G` are
//! auxiliary copies of `XUV` and `XH`.

mod admm;
mod baseline;
mod persist;

pub use admm::{fit, fit_ablation, fit_with_trace, init, step};
pub use baseline::fit_baseline;
pub use persist::{load_model, save_model, write_trace_csv, ModelDocument, MODEL_FORMAT, MODEL_FORMAT_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{numerical_ridge, Matrix};

/// Which model is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Low-rank plus sparse.
    Full,
    /// Sparse term only.
    NoLowRank,
    /// Low-rank term only.
    NoSparsity,
    /// Per-label masked ridge regression.
    Baseline,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoLowRank, Variant::NoSparsity, Variant::Baseline];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoLowRank => "no-low-rank",
            Variant::NoSparsity => "no-sparsity",
            Variant::Baseline => "baseline",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.name() == s)
    }

    pub(crate) fn has_low_rank(self) -> bool {
        matches!(self, Variant::Full | Variant::NoSparsity)
    }

    pub(crate) fn has_sparse(self) -> bool {
        matches!(self, Variant::Full | Variant::NoLowRank)
    }
}

/// How the sparse block's row problems are formed in the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SparseStep {
    /// Solve for both blocks of each row jointly with `Σ(z + m) = 1`, keep the
    /// sparse part. Lets mass move between the two blocks.
    Joint,
    /// Solve the sparse block alone with target sum `1 - Σ z` from the
    /// previous `Z`. When `Z` already lies on the simplex the target is zero
    /// and `H` stays at zero.
    Sequential,
}

/// How `H` is recovered from the sparse block's row solutions `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackMap {
    /// Ridge regression of `M` on `X` constrained to `X H >= 0`.
    NonnegativeImage,
    /// Plain ridge regression of `M` on `X`.
    Ridge,
}

/// Fit settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// Weight on `||U||² + ||V||²`.
    pub lambda1: f64,
    /// Weight on `||H||²`; also the ridge of the back-map from `M` to `H`.
    pub lambda2: f64,
    /// Weight on `||XH||₁`.
    pub lambda3: f64,
    /// Rank of the low-rank term. `None` uses `min(ceil(m / 2), d)`.
    pub rank: Option<usize>,
    pub mu0: f64,
    pub mu_max: f64,
    pub mu_growth: f64,
    pub max_iters: usize,
    /// Bound on `||XUV - Z|| / max(1, ||Z||)` and `||XH - G|| / max(1, ||G||)`.
    pub tol_primal: f64,
    /// Bound on the relative per-sweep change of `Z` and `G`.
    pub tol_dual: f64,
    /// Relative objective change counted as a stall.
    pub tol_objective: f64,
    pub sparse_step: SparseStep,
    pub back_map: BackMap,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 0.1,
            lambda3: 0.1,
            rank: None,
            mu0: 0.3,
            mu_max: 1e6,
            mu_growth: 1.1,
            max_iters: 100,
            tol_primal: 1e-5,
            tol_dual: 1e-4,
            tol_objective: 1e-8,
            sparse_step: SparseStep::Joint,
            back_map: BackMap::NonnegativeImage,
        }
    }
}

/// Grid of values searched for each of `λ₁`, `λ₂`, `λ₃`.
pub const LAMBDA_GRID: [f64; 7] = [0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 10.0];

impl Hyperparams {
    /// Default rank `min(ceil(m / 2), d)`.
    pub fn default_rank(d: usize, m: usize) -> usize {
        m.div_ceil(2).min(d).max(1)
    }

    pub fn rank_for(&self, d: usize, m: usize) -> usize {
        self.rank.unwrap_or_else(|| Self::default_rank(d, m))
    }

    /// Checks ranges; `d` and `m` bound the rank.
    pub fn validate(&self, d: usize, m: usize) -> Result<()> {
        let bad = |field: &'static str, message: String| Err(Error::InvalidHyperparams { field, message });
        let positive = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("mu0", self.mu0),
            ("tol_primal", self.tol_primal),
            ("tol_dual", self.tol_dual),
            ("tol_objective", self.tol_objective),
        ];
        for (field, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return bad(field, format!("must be finite and positive, got {v}"));
            }
        }
        if !(self.lambda3 >= 0.0) || !self.lambda3.is_finite() {
            return bad("lambda3", format!("must be finite and nonnegative, got {}", self.lambda3));
        }
        if !(self.mu_max >= self.mu0) {
            return bad("mu_max", format!("{} is below mu0 = {}", self.mu_max, self.mu0));
        }
        if !(self.mu_growth >= 1.0) || !self.mu_growth.is_finite() {
            return bad("mu_growth", format!("must be at least 1, got {}", self.mu_growth));
        }
        let k = self.rank_for(d, m);
        if k == 0 || k > d.min(m) {
            return bad("rank", format!("{k} outside 1..={}", d.min(m)));
        }
        Ok(())
    }
}

/// Training inputs: features `X`, zero-filled observed labels `D̃` and mask `Ω`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub x: Matrix,
    pub dtilde: Matrix,
    pub omega: Matrix,
    pub(crate) xtx: Matrix,
    pub(crate) numerical_ridge: f64,
}

impl Problem {
    /// Validates shapes and that `D̃` vanishes where `Ω` is zero.
    pub fn new(x: Matrix, dtilde: Matrix, omega: Matrix) -> Result<Self> {
        let (n, d) = x.shape();
        if n == 0 || d == 0 || dtilde.ncols() == 0 {
            return Err(Error::BadShape(format!("empty problem ({n}x{d})")));
        }
        if dtilde.nrows() != n || omega.shape() != dtilde.shape() {
            return Err(Error::ShapeMismatch(format!(
                "X {:?}, D̃ {:?}, Ω {:?}",
                x.shape(),
                dtilde.shape(),
                omega.shape()
            )));
        }
        crate::linalg::check_finite(&x)?;
        crate::linalg::check_finite(&dtilde)?;
        if let Some(v) = omega.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(Error::ShapeMismatch(format!("mask entry {v} is not 0 or 1")));
        }
        let xtx = x.tr_mul(&x);
        let numerical_ridge = numerical_ridge(&xtx);
        Ok(Self {
            x,
            dtilde,
            omega,
            xtx,
            numerical_ridge,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn m(&self) -> usize {
        self.dtilde.ncols()
    }
}

/// Model factors: prediction is `X U V + X H`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub u: Matrix,
    pub v: Matrix,
    pub h: Matrix,
}

/// Per-sweep diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub objective: f64,
    /// `||XUV - Z|| / max(1, ||Z||)`.
    pub r1: f64,
    /// `||XH - G|| / max(1, ||G||)`.
    pub r2: f64,
    /// `||Z - Z_prev|| / max(1, ||Z||)`.
    pub s1: f64,
    /// `||G - G_prev|| / max(1, ||G||)`.
    pub s2: f64,
    /// Penalty after the sweep's update.
    pub mu: f64,
    /// Row problems whose target sum had to be clamped into `[0, 1]`.
    pub clamped_rows: usize,
}

/// Auxiliary variables, multipliers and history of an ADMM run.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub z: Matrix,
    pub g: Matrix,
    /// Latest row solutions of the sparse block.
    pub m: Matrix,
    pub lambda1: Matrix,
    pub lambda2: Matrix,
    pub mu: f64,
    pub iter: usize,
    pub trace: Vec<TraceRecord>,
}

/// Outcome of a fit.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub variant: Variant,
    pub params: ModelParams,
    pub state: AdmmState,
    pub converged: bool,
    pub iterations_used: usize,
    pub objective_final: f64,
}

/// Evaluates `½ ||Ω ⊙ (XUV + XH - D̃)||² + λ₁ (||U||² + ||V||²) + λ₂ ||H||² + λ₃ ||XH||₁`.
pub fn objective(params: &ModelParams, problem: &Problem, hyper: &Hyperparams) -> Result<f64> {
    let (d, m) = (problem.d(), problem.m());
    let k = params.u.ncols();
    if params.u.nrows() != d || params.v.shape() != (k, m) || params.h.shape() != (d, m) {
        return Err(Error::ShapeMismatch(format!(
            "U {:?}, V {:?}, H {:?} for d = {d}, m = {m}",
            params.u.shape(),
            params.v.shape(),
            params.h.shape()
        )));
    }
    let xh = &problem.x * &params.h;
    let fit = &problem.x * &params.u * &params.v + &xh;
    let residual = (fit - &problem.dtilde).component_mul(&problem.omega);
    Ok(0.5 * residual.norm_squared()
        + hyper.lambda1 * (params.u.norm_squared() + params.v.norm_squared())
        + hyper.lambda2 * params.h.norm_squared()
        + hyper.lambda3 * xh.iter().map(|v| v.abs()).sum::<f64>())
}

/// Predicts label distributions: negatives of `X U V + X H` are clamped to zero
/// and rows renormalized; a row with no positive entry becomes uniform.
pub fn predict(params: &ModelParams, x: &Matrix) -> Result<Matrix> {
    if x.ncols() != params.u.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "model expects {} features, got {}",
            params.u.nrows(),
            x.ncols()
        )));
    }
    let mut raw = x * &params.u * &params.v + x * &params.h;
    let m = raw.ncols();
    for i in 0..raw.nrows() {
        let mut row = raw.row_mut(i);
        row.apply(|v| *v = v.max(0.0));
        let s = row.sum();
        if s > 0.0 && s.is_finite() {
            row /= s;
        } else {
            row.fill(1.0 / m as f64);
        }
    }
    Ok(raw)
}
