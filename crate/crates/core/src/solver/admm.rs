use rayon::prelude::*;

use super::{AdmmState, BackMap, FitReport, Hyperparams, ModelParams, Problem, SparseStep, TraceRecord, Variant};
use crate::error::{Error, Result};
use crate::linalg::{
    check_finite, solve_ridge_nonneg_image, solve_ridge_normal, solve_sylvester, soft_threshold, Matrix,
};
use crate::simplex_qp::{
    assemble_h_instance, assemble_z_instance, project_to_simplex, solve_paired_row_qp, solve_row_qp,
    PairedRowQp, DEFAULT_TOL,
};

const SYLVESTER_TOL: f64 = 1e-10;
const STALL_SWEEPS: usize = 3;

fn row(m: &Matrix, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

fn from_rows(rows: Vec<Vec<f64>>, m: usize) -> Matrix {
    let n = rows.len();
    Matrix::from_fn(n, m, |i, j| rows[i][j])
}

fn relative(diff: f64, reference: f64) -> f64 {
    diff / reference.max(1.0)
}

fn ensure_finite(m: &Matrix, iteration: usize, quantity: &'static str) -> Result<()> {
    check_finite(m).map_err(|_| Error::NumericalBreakdown { iteration, quantity })
}

/// Initial model and state.
///
/// Missing entries are filled with the mean of the observed entries in their
/// row, a ridge regression of the filled labels gives `W₀`, and its leading
/// `k` singular triplets give `U = P_k S_k` and `V = Q_kᵀ`. `H` and `G` start
/// at zero and `Z` is the row-wise simplex projection of `XUV`. For the
/// sparse-only variant the low-rank factors and `Z` start at zero.
///
/// The result does not depend on `seed`; it is accepted for interface
/// stability.
pub fn init(problem: &Problem, hyper: &Hyperparams, variant: Variant, _seed: u64) -> Result<(ModelParams, AdmmState)> {
    let (n, d, m) = (problem.n(), problem.d(), problem.m());
    hyper.validate(d, m)?;
    let k = hyper.rank_for(d, m);
    let mut filled = problem.dtilde.clone();
    for i in 0..n {
        let observed = problem.omega.row(i).sum();
        let fill = if observed > 0.0 {
            problem.dtilde.row(i).sum() / observed
        } else {
            1.0 / m as f64
        };
        for j in 0..m {
            if problem.omega[(i, j)] == 0.0 {
                filled[(i, j)] = fill;
            }
        }
    }
    let mut u = Matrix::zeros(d, k);
    let mut v = Matrix::zeros(k, m);
    let mut z = Matrix::zeros(n, m);
    if variant.has_low_rank() {
        let w0 = solve_ridge_normal(&problem.x, &filled, problem.numerical_ridge)?;
        let svd = w0.svd(true, true);
        let (pu, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        for (c, &s) in idx.iter().take(k).enumerate() {
            let sigma = svd.singular_values[s];
            u.set_column(c, &(pu.column(s) * sigma));
            v.set_row(c, &vt.row(s));
        }
        let xuv = &problem.x * &u * &v;
        let rows: Result<Vec<Vec<f64>>> = (0..n).map(|i| project_to_simplex(&row(&xuv, i))).collect();
        z = from_rows(rows?, m);
    }
    let params = ModelParams { u, v, h: Matrix::zeros(d, m) };
    let state = AdmmState {
        z,
        g: Matrix::zeros(n, m),
        m: Matrix::zeros(n, m),
        lambda1: Matrix::zeros(n, m),
        lambda2: Matrix::zeros(n, m),
        mu: hyper.mu0,
        iter: 0,
        trace: Vec::new(),
    };
    Ok((params, state))
}

fn sparse_rows(params: &ModelParams, state: &AdmmState, problem: &Problem, hyper: &Hyperparams, variant: Variant) -> Result<(Matrix, usize)> {
    let (n, m) = (problem.n(), problem.m());
    let mu = state.mu;
    let zeros = vec![0.0; m];
    let joint = variant == Variant::Full && hyper.sparse_step == SparseStep::Joint;
    let (a, b) = if joint {
        (
            &problem.x * &params.u * &params.v + &state.lambda1 / mu,
            &state.g - &state.lambda2 / mu,
        )
    } else {
        (Matrix::zeros(0, 0), Matrix::zeros(0, 0))
    };
    let solved: Result<Vec<(Vec<f64>, bool)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let w = row(&problem.omega, i);
            let dt = row(&problem.dtilde, i);
            if joint {
                let (ar, br) = (row(&a, i), row(&b, i));
                let p = PairedRowQp { w: &w, dtilde: &dt, a: &ar, b: &br, mu, c: 1.0 };
                Ok((solve_paired_row_qp(&p, DEFAULT_TOL)?.m, false))
            } else {
                let z = if variant == Variant::Full { row(&state.z, i) } else { zeros.clone() };
                let (inst, clamped) =
                    assemble_h_instance(&w, &dt, &z, &row(&state.g, i), &row(&state.lambda2, i), mu);
                Ok((solve_row_qp(&inst, DEFAULT_TOL)?.x, clamped))
            }
        })
        .collect();
    let solved = solved?;
    let clamped = solved.iter().filter(|(_, c)| *c).count();
    Ok((from_rows(solved.into_iter().map(|(x, _)| x).collect(), m), clamped))
}

fn z_rows(xh: &Matrix, xuv: &Matrix, state: &AdmmState, problem: &Problem) -> Result<(Matrix, usize)> {
    let (n, m) = (problem.n(), problem.m());
    let solved: Result<Vec<(Vec<f64>, bool)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (inst, clamped) = assemble_z_instance(
                &row(&problem.omega, i),
                &row(&problem.dtilde, i),
                &row(xh, i),
                &row(xuv, i),
                &row(&state.lambda1, i),
                state.mu,
            );
            Ok((solve_row_qp(&inst, DEFAULT_TOL)?.x, clamped))
        })
        .collect();
    let solved = solved?;
    let clamped = solved.iter().filter(|(_, c)| *c).count();
    Ok((from_rows(solved.into_iter().map(|(x, _)| x).collect(), m), clamped))
}

/// One sweep `H → Z → U → V → G → multipliers`, appending a trace record.
///
/// The sparse block's rows are solved first (jointly with the low-rank block
/// under [`SparseStep::Joint`]), mapped back to `H`, and `Z` is then solved
/// against the fresh `XH` so that `(Z + XH) 1 = 1` holds after the sweep.
pub fn step(params: &mut ModelParams, state: &mut AdmmState, problem: &Problem, hyper: &Hyperparams, variant: Variant) -> Result<()> {
    if variant == Variant::Baseline {
        return Err(Error::InvalidHyperparams {
            field: "variant",
            message: "the baseline has no ADMM sweep".into(),
        });
    }
    let (n, m) = (problem.n(), problem.m());
    let it = state.iter + 1;
    let mu = state.mu;
    let z_prev = state.z.clone();
    let g_prev = state.g.clone();
    let mut clamped_rows = 0;

    let xh = if variant.has_sparse() {
        let (mrows, clamped) = sparse_rows(params, state, problem, hyper, variant)?;
        clamped_rows += clamped;
        let ridge = hyper.lambda2 + problem.numerical_ridge;
        params.h = match hyper.back_map {
            BackMap::NonnegativeImage => solve_ridge_nonneg_image(&problem.x, &mrows, ridge)?,
            BackMap::Ridge => solve_ridge_normal(&problem.x, &mrows, ridge)?,
        };
        state.m = mrows;
        ensure_finite(&params.h, it, "H")?;
        &problem.x * &params.h
    } else {
        Matrix::zeros(n, m)
    };

    if variant.has_low_rank() {
        let xuv = &problem.x * &params.u * &params.v;
        let (z, clamped) = z_rows(&xh, &xuv, state, problem)?;
        clamped_rows += clamped;
        state.z = z;

        let k = params.v.nrows();
        let vvt = &params.v * params.v.transpose();
        let trace = vvt.trace();
        let eps_b = if trace > 0.0 { 1e-10 * trace / k as f64 } else { 1e-10 };
        let mut reg = vvt;
        for i in 0..k {
            reg[(i, i)] += eps_b;
        }
        let b = reg
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or(Error::NumericalBreakdown { iteration: it, quantity: "(VVᵀ)⁻¹" })?;
        let two_l1 = 2.0 * hyper.lambda1;
        let a = &problem.xtx * (mu / two_l1);
        let xt_rhs = problem.x.tr_mul(&(&state.z * mu - &state.lambda1));
        let c = &xt_rhs * params.v.transpose() * &b / two_l1;
        params.u = solve_sylvester(&a, &b, &c, SYLVESTER_TOL)?;
        ensure_finite(&params.u, it, "U")?;

        let xu = &problem.x * &params.u;
        let mut lhs = xu.tr_mul(&xu) * mu;
        for i in 0..k {
            lhs[(i, i)] += two_l1;
        }
        let rhs = xu.tr_mul(&(&state.z * mu - &state.lambda1));
        params.v = lhs
            .cholesky()
            .map(|c| c.solve(&rhs))
            .ok_or(Error::NumericalBreakdown { iteration: it, quantity: "V" })?;
        ensure_finite(&params.v, it, "V")?;
        let xuv = xu * &params.v;
        state.lambda1 += (&xuv - &state.z) * mu;
        ensure_finite(&state.lambda1, it, "Λ₁")?;
    }

    if variant.has_sparse() {
        let shifted = &xh + &state.lambda2 / mu;
        state.g = soft_threshold(&shifted, hyper.lambda3 / mu)?;
        state.lambda2 += (&xh - &state.g) * mu;
        ensure_finite(&state.lambda2, it, "Λ₂")?;
    }

    state.mu = (hyper.mu_growth * mu).min(hyper.mu_max);
    state.iter = it;
    let objective = super::objective(params, problem, hyper)?;
    if !objective.is_finite() {
        return Err(Error::NumericalBreakdown { iteration: it, quantity: "objective" });
    }
    let (r1, s1) = if variant.has_low_rank() {
        let xuv = &problem.x * &params.u * &params.v;
        let zn = state.z.norm();
        (relative((&xuv - &state.z).norm(), zn), relative((&state.z - &z_prev).norm(), zn))
    } else {
        (0.0, 0.0)
    };
    let (r2, s2) = if variant.has_sparse() {
        let gn = state.g.norm();
        (relative((&xh - &state.g).norm(), gn), relative((&state.g - &g_prev).norm(), gn))
    } else {
        (0.0, 0.0)
    };
    state.trace.push(TraceRecord {
        iter: it,
        objective,
        r1,
        r2,
        s1,
        s2,
        mu: state.mu,
        clamped_rows,
    });
    Ok(())
}

/// Fits `variant` by ADMM, streaming each trace record into `sink` as it is
/// produced so the history survives a numerical breakdown.
///
/// Stops when the relative primal residuals are below `tol_primal` and the
/// relative changes of `Z` and `G` are below `tol_dual`; or when the objective
/// changes by at most `tol_objective` (relative) for three consecutive sweeps;
/// or after `max_iters` sweeps. `converged` is set only when the primal
/// residuals meet `tol_primal`.
pub fn fit_with_trace(problem: &Problem, hyper: &Hyperparams, variant: Variant, seed: u64, sink: &mut Vec<TraceRecord>) -> Result<FitReport> {
    let (mut params, mut state) = init(problem, hyper, variant, seed)?;
    let mut objective_final = super::objective(&params, problem, hyper)?;
    let mut converged = false;
    let mut stalled = 0;
    for _ in 0..hyper.max_iters {
        step(&mut params, &mut state, problem, hyper, variant)?;
        let rec = state.trace.last().expect("step appends a record").clone();
        sink.push(rec.clone());
        let primal_ok = rec.r1 <= hyper.tol_primal && rec.r2 <= hyper.tol_primal;
        let dual_ok = rec.s1 <= hyper.tol_dual && rec.s2 <= hyper.tol_dual;
        let change = (rec.objective - objective_final).abs();
        stalled = if change <= hyper.tol_objective * rec.objective.abs().max(1.0) { stalled + 1 } else { 0 };
        objective_final = rec.objective;
        if primal_ok && dual_ok {
            converged = true;
            break;
        }
        if stalled >= STALL_SWEEPS {
            converged = primal_ok;
            break;
        }
    }
    Ok(FitReport {
        variant,
        iterations_used: state.iter,
        params,
        state,
        converged,
        objective_final,
    })
}

/// Fits the full low-rank plus sparse model.
pub fn fit(problem: &Problem, hyper: &Hyperparams, seed: u64) -> Result<FitReport> {
    fit_with_trace(problem, hyper, Variant::Full, seed, &mut Vec::new())
}

/// Fits one of the reduced models: [`Variant::NoLowRank`] keeps only `XH`
/// (its rows solved with target sum one), [`Variant::NoSparsity`] keeps only
/// `XUV` (with `Z` on the simplex).
pub fn fit_ablation(variant: Variant, problem: &Problem, hyper: &Hyperparams, seed: u64) -> Result<FitReport> {
    if !matches!(variant, Variant::NoLowRank | Variant::NoSparsity) {
        return Err(Error::InvalidHyperparams {
            field: "variant",
            message: format!("{} is not an ablation", variant.name()),
        });
    }
    fit_with_trace(problem, hyper, variant, seed, &mut Vec::new())
}
