use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::report::{
    ablation_csv, ablation_folds_csv, experiment_csv, grid_csv, write, write_json, AblationReport,
    AblationRow, DatasetInfo, ExperimentReport, FoldResult, GridPoint, GridReport, Outcome,
    REPORT_SCHEMA_VERSION,
};
use super::ExperimentConfig;
use crate::data::{
    induce_imbalance, make_mask, make_split, row_checksum, with_bias_column, LabelDistributionDataset,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::{evaluate, Metric, MetricReport, Summary};
use crate::solver::{
    fit_baseline, fit_with_trace, predict, save_model, write_trace_csv, Hyperparams, ModelDocument,
    ModelParams, Problem, TraceRecord, Variant,
};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "I2LDL_THREADS";

/// Sizes the global thread pool from [`THREADS_ENV`]. Returns the cap, or
/// `None` when the variable is unset. Has no effect if the pool was already
/// built.
pub fn init_thread_pool_from_env() -> Result<Option<usize>> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| Error::Config {
        field: THREADS_ENV.into(),
        message: format!("expected a positive integer, got {raw:?}"),
    })?;
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}

/// Everything a fold produced, including what does not go into reports.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub result: FoldResult,
    pub trace: Vec<TraceRecord>,
    pub params: ModelParams,
}

/// A fold whose fit failed, with the trace recorded up to the failure.
#[derive(Debug)]
pub struct FoldFailure {
    pub fold: usize,
    pub error: Error,
    pub trace: Vec<TraceRecord>,
}

/// Settings shared by every fold of a run.
#[derive(Debug, Clone)]
pub struct Protocol {
    pub omega: f64,
    pub gamma: f64,
    pub bias_column: bool,
    pub variant: Variant,
    pub hyper: Hyperparams,
}

impl Protocol {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            omega: cfg.omega,
            gamma: cfg.gamma,
            bias_column: cfg.bias_column,
            variant: cfg.variant,
            hyper: cfg.hyperparams(),
        }
    }

    fn features(&self, x: &Matrix) -> Matrix {
        if self.bias_column {
            with_bias_column(x)
        } else {
            x.clone()
        }
    }
}

/// Seed of fold `f`.
pub fn fold_seed(seed: u64, f: usize) -> u64 {
    seed ^ f as u64
}

fn checksum(features: &Matrix, labels: &Matrix, rows: &[usize]) -> String {
    format!("{:016x}{:016x}", row_checksum(features, rows), row_checksum(labels, rows))
}

struct Fitted {
    params: ModelParams,
    converged: bool,
    iterations: usize,
    objective: f64,
}

fn baseline_objective(problem: &Problem, w: &Matrix, ridge: f64) -> f64 {
    let r = (&problem.x * w - &problem.dtilde).component_mul(&problem.omega);
    0.5 * r.norm_squared() + ridge * w.norm_squared()
}

fn fit_variant(
    problem: &Problem,
    protocol: &Protocol,
    seed: u64,
    trace: &mut Vec<TraceRecord>,
) -> Result<Fitted> {
    if protocol.variant == Variant::Baseline {
        let params = fit_baseline(problem, protocol.hyper.lambda1)?;
        let objective = baseline_objective(problem, &params.u, protocol.hyper.lambda1);
        return Ok(Fitted { params, converged: true, iterations: 0, objective });
    }
    let report = fit_with_trace(problem, &protocol.hyper, protocol.variant, seed, trace)?;
    Ok(Fitted {
        params: report.params,
        converged: report.converged,
        iterations: report.iterations_used,
        objective: report.objective_final,
    })
}

/// Runs one fold: imbalance induction and masking on the training rows only,
/// a fit, and evaluation on the test rows exactly as stored in `ds`.
pub fn run_fold(
    ds: &LabelDistributionDataset,
    train: &[usize],
    test: &[usize],
    protocol: &Protocol,
    fold: usize,
    seed: u64,
) -> std::result::Result<FoldOutcome, FoldFailure> {
    let mut trace = Vec::new();
    let fail = |error: Error, trace: Vec<TraceRecord>| FoldFailure { fold, error, trace };
    let before = checksum(&ds.features, &ds.labels, test);

    let prepared = (|| -> Result<_> {
        let raw = ds.select_rows(train);
        let (seen, profile) = if protocol.gamma > 1.0 {
            let (imb, profile) = induce_imbalance(&raw, protocol.gamma, seed)?;
            (imb, Some(profile))
        } else {
            (raw, None)
        };
        let mask = make_mask(seen.n(), seen.m(), protocol.omega, seed)?;
        let problem = Problem::new(
            protocol.features(&seen.features),
            mask.apply(&seen.labels),
            mask.omega.clone(),
        )?;
        Ok((problem, profile, mask))
    })();
    let (problem, profile, mask) = prepared.map_err(|e| fail(e, Vec::new()))?;

    let fitted = match fit_variant(&problem, protocol, seed, &mut trace) {
        Ok(f) => f,
        Err(e) => return Err(fail(e, trace)),
    };

    let evaluated = (|| -> Result<_> {
        let test_ds = ds.select_rows(test);
        let pred = predict(&fitted.params, &protocol.features(&test_ds.features))?;
        let metrics = evaluate(&test_ds.labels, &pred)?;
        let all: Vec<usize> = (0..test.len()).collect();
        Ok((metrics, checksum(&test_ds.features, &test_ds.labels, &all)))
    })();
    let (metrics, after) = match evaluated {
        Ok(v) => v,
        Err(e) => return Err(fail(e, trace)),
    };

    let result = FoldResult {
        fold,
        seed,
        n_train: train.len(),
        n_test: test.len(),
        metrics,
        converged: fitted.converged,
        iterations: fitted.iterations,
        objective: fitted.objective,
        achieved_gamma: profile.as_ref().map(|p| p.achieved_gamma),
        effective_gamma: profile.as_ref().map(|p| p.effective_gamma),
        mask_zero_fraction: mask.zero_fraction(),
        restored_rows: mask.restored_rows,
        test_checksum_before: before,
        test_checksum_after: after,
        warnings: profile.map(|p| p.warnings).unwrap_or_default(),
    };
    Ok(FoldOutcome { result, trace, params: fitted.params })
}

/// Mean and population std of per-fold means.
fn aggregate(folds: &[FoldResult]) -> MetricReport {
    let summaries = Metric::ALL.map(|m| {
        let values: Vec<f64> = folds.iter().map(|f| f.metrics.get(m).mean).collect();
        Summary::of(&values)
    });
    MetricReport::from_summaries(summaries, folds.len())
}

fn prepare(cfg: &ExperimentConfig) -> Result<(LabelDistributionDataset, DatasetInfo)> {
    cfg.validate()?;
    let ds = cfg.dataset()?;
    cfg.validate_for(ds.d() + usize::from(cfg.bias_column), ds.m())?;
    let info = DatasetInfo {
        source: if cfg.features.is_some() { "files" } else { "synthetic" }.into(),
        n: ds.n(),
        d: ds.d(),
        m: ds.m(),
        renormalized_rows: ds.renormalized_rows,
    };
    Ok((ds, info))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Runs every fold of a k-fold partition in parallel. Results come back in
/// fold order and do not depend on scheduling.
pub fn run_folds(
    ds: &LabelDistributionDataset,
    protocol: &Protocol,
    folds: usize,
    seed: u64,
) -> Result<Vec<std::result::Result<FoldOutcome, FoldFailure>>> {
    let plan = make_split(ds.n(), 0.0, folds, seed)?;
    Ok((0..folds)
        .into_par_iter()
        .map(|f| run_fold(ds, &plan.fold_complement(f), &plan.folds[f], protocol, f, fold_seed(seed, f)))
        .collect())
}

/// Cross-validates the configured model and writes `report.json`,
/// `report.csv` and one `trace_fold_<i>.csv` per fold into `cfg.out`.
///
/// Each fold of a k-fold partition serves once as the test set. If a fit
/// breaks down, the traces of all folds are still written before the error
/// is returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let (ds, dataset) = prepare(cfg)?;
    let protocol = Protocol::from_config(cfg);
    create_dir(&cfg.out)?;
    let outcomes = run_folds(&ds, &protocol, cfg.folds, cfg.seed)?;

    let mut first_error = None;
    let mut folds = Vec::with_capacity(outcomes.len());
    for (f, outcome) in outcomes.into_iter().enumerate() {
        let trace_path = cfg.out.join(format!("trace_fold_{f}.csv"));
        match outcome {
            Ok(o) => {
                write_trace_csv(&trace_path, &o.trace)?;
                if cfg.save_models {
                    let doc = ModelDocument::new(&o.params, cfg.variant, &protocol.hyper, o.result.seed, cfg.bias_column);
                    save_model(cfg.out.join(format!("model_fold_{f}.json")), &doc)?;
                }
                folds.push(o.result);
            }
            Err(failure) => {
                write_trace_csv(&trace_path, &failure.trace)?;
                first_error.get_or_insert(failure.error);
            }
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }

    let report = ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        variant: cfg.variant,
        dataset,
        hyperparams: protocol.hyper.clone(),
        config: cfg.clone(),
        aggregate: aggregate(&folds),
        folds,
    };
    write_json(&cfg.out.join("report.json"), &report)?;
    write(&cfg.out.join("report.csv"), &experiment_csv(&report))?;
    Ok(report)
}

fn rank_order(points: &[MetricReport], metric: Metric) -> Vec<usize> {
    let key = |r: &MetricReport, m: Metric| {
        let v = r.get(m).mean;
        if m.higher_is_better() { -v } else { v }
    };
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        key(&points[a], metric)
            .total_cmp(&key(&points[b], metric))
            .then(key(&points[a], Metric::Intersection).total_cmp(&key(&points[b], Metric::Intersection)))
            .then(a.cmp(&b))
    });
    order
}

/// Grid search by inner cross-validation on the training portion, followed
/// by a refit of the winner and one evaluation on the held-out rows. Writes
/// `grid.csv` and `best.json` into `cfg.out`.
///
/// Inner folds fit on masked training rows and validate against the labels
/// the learner is given, that is after imbalance induction. The held-out
/// rows are read only for the final evaluation.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<GridReport> {
    let (ds, _) = prepare(cfg)?;
    let metric = cfg.selection()?;
    create_dir(&cfg.out)?;
    let plan = make_split(ds.n(), cfg.test_fraction, cfg.folds, cfg.seed)?;
    let base = Protocol::from_config(cfg);
    let before = checksum(&ds.features, &ds.labels, &plan.test_indices);

    let train = ds.select_rows(&plan.train_indices);
    let seen = if cfg.gamma > 1.0 { induce_imbalance(&train, cfg.gamma, cfg.seed)?.0 } else { train };
    let pos: HashMap<usize, usize> = plan.train_indices.iter().enumerate().map(|(p, &i)| (i, p)).collect();
    let local = |rows: &[usize]| -> Vec<usize> { rows.iter().map(|i| pos[i]).collect() };
    let inner: Vec<(Vec<usize>, Vec<usize>)> = (0..cfg.folds)
        .map(|f| (local(&plan.fold_complement(f)), local(&plan.folds[f])))
        .collect();

    let mut combos = Vec::new();
    for &l1 in &cfg.grid_lambda1 {
        for &l2 in &cfg.grid_lambda2 {
            for &l3 in &cfg.grid_lambda3 {
                combos.push((l1, l2, l3));
            }
        }
    }
    let inner_protocol = Protocol { gamma: 1.0, ..base.clone() };
    let evaluated: Vec<Result<(MetricReport, usize)>> = combos
        .par_iter()
        .map(|&(l1, l2, l3)| {
            let protocol = Protocol {
                hyper: Hyperparams { lambda1: l1, lambda2: l2, lambda3: l3, ..base.hyper.clone() },
                ..inner_protocol.clone()
            };
            protocol.hyper.validate(ds.d() + usize::from(cfg.bias_column), ds.m()).map_err(|e| match e {
                Error::InvalidHyperparams { field, message } => Error::Config { field: format!("grid_{field}"), message },
                other => other,
            })?;
            let mut results = Vec::with_capacity(inner.len());
            for (f, (fit_rows, val_rows)) in inner.iter().enumerate() {
                let o = run_fold(&seen, fit_rows, val_rows, &protocol, f, fold_seed(cfg.seed, f)).map_err(|e| e.error)?;
                results.push(o.result);
            }
            Ok((aggregate(&results), results.iter().filter(|r| r.converged).count()))
        })
        .collect();
    let evaluated: Vec<(MetricReport, usize)> = evaluated.into_iter().collect::<Result<_>>()?;

    let reports: Vec<MetricReport> = evaluated.iter().map(|(r, _)| r.clone()).collect();
    let order = rank_order(&reports, metric);
    let mut rank = vec![0; combos.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    let points: Vec<GridPoint> = combos
        .iter()
        .zip(evaluated)
        .zip(&rank)
        .map(|((&(lambda1, lambda2, lambda3), (validation, converged_folds)), &rank)| GridPoint {
            lambda1,
            lambda2,
            lambda3,
            validation,
            converged_folds,
            rank,
        })
        .collect();
    let best = points[order[0]].clone();

    let protocol = Protocol {
        hyper: Hyperparams { lambda1: best.lambda1, lambda2: best.lambda2, lambda3: best.lambda3, ..base.hyper.clone() },
        ..base
    };
    let outcome = run_fold(&ds, &plan.train_indices, &plan.test_indices, &protocol, 0, cfg.seed).map_err(|e| e.error)?;

    let report = GridReport {
        schema_version: REPORT_SCHEMA_VERSION,
        variant: cfg.variant,
        selection_metric: metric.name().into(),
        grid_size: points.len(),
        lambda1: best.lambda1,
        lambda2: best.lambda2,
        lambda3: best.lambda3,
        validation: best.validation,
        test: outcome.result.metrics,
        test_checksum_before: before,
        test_checksum_after: outcome.result.test_checksum_after,
        points,
    };
    write(&cfg.out.join("grid.csv"), &grid_csv(&report.points))?;
    write_json(&cfg.out.join("best.json"), &report)?;
    Ok(report)
}

/// Cross-validates the full model, both reduced models and the baseline on
/// identical folds and seeds, and writes `ablation.csv` and
/// `ablation_folds.csv` into `cfg.out`. `cfg.variant` is ignored.
pub fn run_ablation_suite(cfg: &ExperimentConfig) -> Result<AblationReport> {
    let (ds, _) = prepare(cfg)?;
    create_dir(&cfg.out)?;
    let mut rows: Vec<AblationRow> = Vec::new();
    for variant in Variant::ALL {
        let protocol = Protocol { variant, ..Protocol::from_config(cfg) };
        let folds: Vec<FoldResult> = run_folds(&ds, &protocol, cfg.folds, cfg.seed)?
            .into_iter()
            .map(|o| o.map(|o| o.result).map_err(|e| e.error))
            .collect::<Result<_>>()?;
        rows.push(AblationRow { variant, aggregate: aggregate(&folds), folds, full_vs: Vec::new() });
    }
    let full = rows[0].aggregate.means();
    for row in rows.iter_mut().skip(1) {
        let other = row.aggregate.means();
        row.full_vs = Metric::ALL.iter().enumerate().map(|(k, &m)| Outcome::of(m, full[k], other[k])).collect();
    }
    let report = AblationReport { schema_version: REPORT_SCHEMA_VERSION, rows };
    write(&cfg.out.join("ablation.csv"), &ablation_csv(&report))?;
    write(&cfg.out.join("ablation_folds.csv"), &ablation_folds_csv(&report))?;
    Ok(report)
}
