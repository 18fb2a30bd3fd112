use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, load_dataset, LabelDistributionDataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::metrics::Metric;
use crate::solver::{Hyperparams, Variant, LAMBDA_GRID};

/// Version accepted in the `config_version` key.
pub const CONFIG_VERSION: u32 = 1;

/// Experiment settings, read from a flat TOML document.
///
/// Every key is optional. Values given on the command line replace values
/// from the file, which replace the defaults below. When `features` and
/// `labels` are both absent the dataset is drawn from the `synthetic_*` keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub config_version: u32,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub synthetic_n: usize,
    pub synthetic_d: usize,
    pub synthetic_m: usize,
    pub synthetic_k: usize,
    pub synthetic_density: f64,
    pub synthetic_noise: f64,
    pub synthetic_scale: f64,
    /// Generator seed; `seed` when absent.
    pub synthetic_seed: Option<u64>,
    /// Fraction of training label entries hidden.
    pub omega: f64,
    /// Imbalance factor induced on training rows; 1 disables induction.
    pub gamma: f64,
    pub variant: Variant,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub rank: Option<usize>,
    pub mu0: f64,
    pub mu_max: f64,
    pub mu_growth: f64,
    pub max_iters: usize,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub tol_objective: f64,
    pub grid_lambda1: Vec<f64>,
    pub grid_lambda2: Vec<f64>,
    pub grid_lambda3: Vec<f64>,
    /// Metric that ranks grid points; Intersection breaks ties.
    pub selection_metric: String,
    pub folds: usize,
    /// Held-out fraction used by grid search.
    pub test_fraction: f64,
    pub seed: u64,
    pub out: PathBuf,
    /// Append a constant feature.
    pub bias_column: bool,
    /// Write each fold's fitted model next to the report.
    pub save_models: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let h = Hyperparams::default();
        let s = SyntheticSpec::default();
        Self {
            config_version: CONFIG_VERSION,
            features: None,
            labels: None,
            synthetic_n: s.n,
            synthetic_d: s.d,
            synthetic_m: s.m,
            synthetic_k: s.k_true,
            synthetic_density: s.sparse_density,
            synthetic_noise: s.noise,
            synthetic_scale: s.signal_scale,
            synthetic_seed: None,
            omega: 0.5,
            gamma: 10.0,
            variant: Variant::Full,
            lambda1: h.lambda1,
            lambda2: h.lambda2,
            lambda3: h.lambda3,
            rank: h.rank,
            mu0: h.mu0,
            mu_max: h.mu_max,
            mu_growth: h.mu_growth,
            max_iters: h.max_iters,
            tol_primal: h.tol_primal,
            tol_dual: h.tol_dual,
            tol_objective: h.tol_objective,
            grid_lambda1: LAMBDA_GRID.to_vec(),
            grid_lambda2: LAMBDA_GRID.to_vec(),
            grid_lambda3: LAMBDA_GRID.to_vec(),
            selection_metric: Metric::Chebyshev.name().to_string(),
            folds: 10,
            test_fraction: 0.1,
            seed: 0,
            out: PathBuf::from("i2ldl-out"),
            bias_column: true,
            save_models: false,
        }
    }
}

fn config_error(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Parses a TOML document. Errors name the offending key and line.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                path: origin.to_path_buf(),
                line,
                message: e.message().to_string(),
            }
        })?;
        if cfg.config_version != CONFIG_VERSION {
            return Err(config_error(
                "config_version",
                format!("unsupported version {}, expected {CONFIG_VERSION}", cfg.config_version),
            ));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            rank: self.rank,
            mu0: self.mu0,
            mu_max: self.mu_max,
            mu_growth: self.mu_growth,
            max_iters: self.max_iters,
            tol_primal: self.tol_primal,
            tol_dual: self.tol_dual,
            tol_objective: self.tol_objective,
            ..Hyperparams::default()
        }
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            n: self.synthetic_n,
            d: self.synthetic_d,
            m: self.synthetic_m,
            k_true: self.synthetic_k,
            sparse_density: self.synthetic_density,
            noise: self.synthetic_noise,
            signal_scale: self.synthetic_scale,
            seed: self.synthetic_seed.unwrap_or(self.seed),
        }
    }

    pub fn selection(&self) -> Result<Metric> {
        Metric::parse(&self.selection_metric).ok_or_else(|| {
            config_error(
                "selection_metric",
                format!("unknown metric {:?}", self.selection_metric),
            )
        })
    }

    /// Checks everything that does not depend on the dataset.
    pub fn validate(&self) -> Result<()> {
        match (&self.features, &self.labels) {
            (Some(_), None) => return Err(config_error("labels", "features given without labels")),
            (None, Some(_)) => return Err(config_error("features", "labels given without features")),
            _ => {}
        }
        if !(0.0..1.0).contains(&self.omega) {
            return Err(config_error("omega", format!("{} outside [0, 1)", self.omega)));
        }
        if !(self.gamma >= 1.0) || !self.gamma.is_finite() {
            return Err(config_error("gamma", format!("must be finite and at least 1, got {}", self.gamma)));
        }
        if self.folds < 2 {
            return Err(config_error("folds", format!("need at least 2, got {}", self.folds)));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(config_error("test_fraction", format!("{} outside (0, 1)", self.test_fraction)));
        }
        for (field, grid) in [
            ("grid_lambda1", &self.grid_lambda1),
            ("grid_lambda2", &self.grid_lambda2),
            ("grid_lambda3", &self.grid_lambda3),
        ] {
            if grid.is_empty() {
                return Err(config_error(field, "grid is empty"));
            }
            if let Some(v) = grid.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                return Err(config_error(field, format!("grid value {v} is not finite and nonnegative")));
            }
        }
        self.selection()?;
        let h = self.hyperparams();
        let d = self.synthetic_d + usize::from(self.bias_column);
        if self.features.is_none() {
            h.validate(d, self.synthetic_m).map_err(as_config)?;
        }
        Ok(())
    }

    /// Checks the settings that depend on the label count.
    pub fn validate_for(&self, d: usize, m: usize) -> Result<()> {
        let max = 1.0 - 1.0 / m as f64;
        if self.omega > max {
            return Err(config_error("omega", format!("{} exceeds 1 - 1/m = {max}", self.omega)));
        }
        self.hyperparams().validate(d, m).map_err(as_config)
    }

    /// Loads the dataset files or draws the synthetic dataset.
    pub fn dataset(&self) -> Result<LabelDistributionDataset> {
        match (&self.features, &self.labels) {
            (Some(f), Some(l)) => load_dataset(f, l),
            _ => generate_synthetic(&self.synthetic_spec())
                .map(|(ds, _)| ds)
                .map_err(as_config),
        }
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidHyperparams { field, message } => config_error(field, message),
        Error::BadShape(message) => config_error("synthetic", message),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig {
            gamma: 3.0,
            rank: Some(2),
            grid_lambda3: vec![0.1],
            ..Default::default()
        };
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string(), Path::new("x")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = "config_version = 1\nomega = 0.5\nlambda4 = 3\n";
        match ExperimentConfig::from_toml_str(text, Path::new("c.toml")) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("lambda4"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_type_is_a_parse_error() {
        let err = ExperimentConfig::from_toml_str("omega = \"half\"\n", Path::new("c.toml")).unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn version_is_checked() {
        let err = ExperimentConfig::from_toml_str("config_version = 2\n", Path::new("c.toml")).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "config_version"));
    }

    #[test]
    fn range_checks() {
        let cases: Vec<(ExperimentConfig, &str)> = vec![
            (ExperimentConfig { omega: 1.0, ..Default::default() }, "omega"),
            (ExperimentConfig { gamma: 0.5, ..Default::default() }, "gamma"),
            (ExperimentConfig { folds: 1, ..Default::default() }, "folds"),
            (ExperimentConfig { grid_lambda2: vec![], ..Default::default() }, "grid_lambda2"),
            (ExperimentConfig { selection_metric: "l2".into(), ..Default::default() }, "selection_metric"),
            (ExperimentConfig { lambda1: 0.0, ..Default::default() }, "lambda1"),
            (ExperimentConfig { rank: Some(9), ..Default::default() }, "rank"),
            (ExperimentConfig { features: Some("f.csv".into()), ..Default::default() }, "labels"),
        ];
        for (cfg, field) in cases {
            match cfg.validate() {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("{field}: expected config error, got {other:?}"),
            }
        }
    }

    #[test]
    fn omega_bound_depends_on_m() {
        let cfg = ExperimentConfig { omega: 0.6, ..Default::default() };
        assert!(cfg.validate_for(21, 2).is_err());
        assert!(cfg.validate_for(21, 6).is_ok());
    }
}
