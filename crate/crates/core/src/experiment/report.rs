use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::error::{Error, Result};
use crate::metrics::{Metric, MetricReport};
use crate::solver::{Hyperparams, Variant};

/// Version of the layout of `report.json`, `best.json` and the CSV tables.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// The JSON schema that `report.json` validates against.
pub const REPORT_SCHEMA: &str = include_str!("../../schema/report.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    /// `"synthetic"` or `"files"`.
    pub source: String,
    pub n: usize,
    /// Feature count before the optional bias column.
    pub d: usize,
    pub m: usize,
    /// Rows whose label sums were renormalized on load.
    pub renormalized_rows: usize,
}

/// Outcome of one train/test fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: MetricReport,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    /// Ratio of largest to smallest training label mean after induction;
    /// absent when no imbalance was induced.
    pub achieved_gamma: Option<f64>,
    pub effective_gamma: Option<f64>,
    pub mask_zero_fraction: f64,
    pub restored_rows: usize,
    /// Hash of the test rows (features and labels) taken from the dataset
    /// before the training pipeline ran.
    pub test_checksum_before: String,
    /// Hash of the test rows that were evaluated.
    pub test_checksum_after: String,
    pub warnings: Vec<String>,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub variant: Variant,
    pub dataset: DatasetInfo,
    pub hyperparams: Hyperparams,
    pub config: ExperimentConfig,
    pub folds: Vec<FoldResult>,
    /// Mean and population std of the per-fold means; `count` is the number
    /// of folds.
    pub aggregate: MetricReport,
}

/// One evaluated point of a grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub validation: MetricReport,
    pub converged_folds: usize,
    /// 1 for the selected point.
    pub rank: usize,
}

/// Contents of `best.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub schema_version: u32,
    pub variant: Variant,
    pub selection_metric: String,
    pub grid_size: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub validation: MetricReport,
    /// The selected setting refitted on the whole training portion and
    /// evaluated on the held-out rows.
    pub test: MetricReport,
    pub test_checksum_before: String,
    pub test_checksum_after: String,
    #[serde(skip)]
    pub points: Vec<GridPoint>,
}

/// Comparison of the full model with one other model on a metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Win,
    Loss,
    Tie,
}

impl Outcome {
    pub fn of(metric: Metric, full: f64, other: f64) -> Outcome {
        if metric.better(full, other) {
            Outcome::Win
        } else if metric.better(other, full) {
            Outcome::Loss
        } else {
            Outcome::Tie
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Outcome::Win => "win",
            Outcome::Loss => "loss",
            Outcome::Tie => "tie",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub aggregate: MetricReport,
    pub folds: Vec<FoldResult>,
    /// Full model against this row, in [`Metric::ALL`] order. Empty for the
    /// full model itself.
    pub full_vs: Vec<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub schema_version: u32,
    pub rows: Vec<AblationRow>,
}

fn num(v: f64) -> String {
    format!("{v:.10}")
}

fn metric_header() -> String {
    Metric::ALL.map(|m| m.name()).join(",")
}

fn metric_values(means: [f64; 6]) -> String {
    means.map(num).join(",")
}

pub(crate) fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

/// Per-fold rows followed by `mean` and `std` rows.
pub fn experiment_csv(report: &ExperimentReport) -> String {
    let mut out = format!("fold,n_test,converged,iterations,{}\n", metric_header());
    for f in &report.folds {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            f.fold,
            f.n_test,
            f.converged,
            f.iterations,
            metric_values(f.metrics.means())
        );
    }
    let agg = &report.aggregate;
    let _ = writeln!(out, "mean,,,,{}", metric_values(agg.means()));
    let _ = writeln!(out, "std,,,,{}", metric_values(Metric::ALL.map(|m| agg.get(m).std)));
    out
}

/// One row per grid point, in grid order.
pub fn grid_csv(points: &[GridPoint]) -> String {
    let mut out = format!("lambda1,lambda2,lambda3,{},converged_folds,rank\n", metric_header());
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.lambda1,
            p.lambda2,
            p.lambda3,
            metric_values(p.validation.means()),
            p.converged_folds,
            p.rank
        );
    }
    out
}

/// One row per model with fold-averaged metrics and the full model's
/// win/loss/tie flags against that row.
pub fn ablation_csv(report: &AblationReport) -> String {
    let flags = Metric::ALL.map(|m| format!("full_vs_{}", m.name())).join(",");
    let mut out = format!("model,{},{flags}\n", metric_header());
    for row in &report.rows {
        let flags = if row.full_vs.is_empty() {
            vec!["-"; 6].join(",")
        } else {
            row.full_vs.iter().map(|o| o.name()).collect::<Vec<_>>().join(",")
        };
        let _ = writeln!(out, "{},{},{flags}", row.variant.name(), metric_values(row.aggregate.means()));
    }
    out
}

/// Per-fold metrics of every model.
pub fn ablation_folds_csv(report: &AblationReport) -> String {
    let mut out = format!("model,fold,converged,{}\n", metric_header());
    for row in &report.rows {
        for f in &row.folds {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                row.variant.name(),
                f.fold,
                f.converged,
                metric_values(f.metrics.means())
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_is_valid_json_with_version() {
        let schema: serde_json::Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
        assert_eq!(
            schema["properties"]["schema_version"]["const"],
            serde_json::json!(REPORT_SCHEMA_VERSION)
        );
    }

    #[test]
    fn outcome_respects_direction() {
        assert_eq!(Outcome::of(Metric::Chebyshev, 0.1, 0.2), Outcome::Win);
        assert_eq!(Outcome::of(Metric::Cosine, 0.1, 0.2), Outcome::Loss);
        assert_eq!(Outcome::of(Metric::Kl, 0.3, 0.3), Outcome::Tie);
    }
}
