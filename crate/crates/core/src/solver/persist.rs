use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Hyperparams, ModelParams, TraceRecord, Variant};
use crate::error::{Error, Result};
use crate::linalg::{dense, Matrix};

/// Value of the `format` field of a saved model.
pub const MODEL_FORMAT: &str = "i2ldl-model";
/// Current model document version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Row-major matrix payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&Matrix> for MatrixDoc {
    fn from(m: &Matrix) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }
}

impl MatrixDoc {
    fn to_matrix(&self) -> Result<Matrix> {
        dense(self.rows, self.cols, &self.data)
    }
}

/// JSON document holding a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub variant: Variant,
    pub n_features: usize,
    pub n_labels: usize,
    pub rank: usize,
    /// True when a constant column was appended to the features before fitting.
    pub bias_column: bool,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub u: MatrixDoc,
    pub v: MatrixDoc,
    pub h: MatrixDoc,
}

impl ModelDocument {
    pub fn new(params: &ModelParams, variant: Variant, hyperparams: &Hyperparams, seed: u64, bias_column: bool) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_FORMAT_VERSION,
            variant,
            n_features: params.u.nrows(),
            n_labels: params.v.ncols(),
            rank: params.u.ncols(),
            bias_column,
            hyperparams: hyperparams.clone(),
            seed,
            u: (&params.u).into(),
            v: (&params.v).into(),
            h: (&params.h).into(),
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        let params = ModelParams {
            u: self.u.to_matrix()?,
            v: self.v.to_matrix()?,
            h: self.h.to_matrix()?,
        };
        let (d, k, m) = (self.n_features, self.rank, self.n_labels);
        if params.u.shape() != (d, k) || params.v.shape() != (k, m) || params.h.shape() != (d, m) {
            return Err(Error::ShapeMismatch(format!(
                "model document declares d={d}, k={k}, m={m} but stores U {:?}, V {:?}, H {:?}",
                params.u.shape(),
                params.v.shape(),
                params.h.shape()
            )));
        }
        Ok(params)
    }
}

/// Writes a model document as pretty-printed JSON.
pub fn save_model(path: impl AsRef<Path>, doc: &ModelDocument) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(doc)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Reads a model document, checking its format tag and version.
pub fn load_model(path: impl AsRef<Path>) -> Result<ModelDocument> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: ModelDocument = serde_json::from_str(&text)?;
    if doc.format != MODEL_FORMAT || doc.version != MODEL_FORMAT_VERSION {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("unsupported model format {} v{}", doc.format, doc.version),
        });
    }
    doc.params()?;
    Ok(doc)
}

/// Writes a trace as CSV with columns `iter,objective,r1,r2,mu,clamped_rows`.
pub fn write_trace_csv(path: impl AsRef<Path>, trace: &[TraceRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("iter,objective,r1,r2,mu,clamped_rows\n");
    for r in trace {
        out.push_str(&format!(
            "{},{:?},{:?},{:?},{:?},{}\n",
            r.iter, r.objective, r.r1, r.r2, r.mu, r.clamped_rows
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let params = ModelParams {
            u: Matrix::from_fn(4, 2, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0)),
            v: Matrix::from_fn(2, 3, |i, j| 1.0 / (1.0 + i as f64 * 7.0 + j as f64).sqrt()),
            h: Matrix::from_fn(4, 3, |i, j| if i == j { std::f64::consts::PI } else { 0.0 }),
        };
        let doc = ModelDocument::new(&params, Variant::Full, &Hyperparams::default(), 42, true);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.json");
        save_model(&p, &doc).unwrap();
        let back = load_model(&p).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.params().unwrap(), params);
    }

    #[test]
    fn rejects_wrong_format() {
        let params = ModelParams { u: Matrix::zeros(1, 1), v: Matrix::zeros(1, 1), h: Matrix::zeros(1, 1) };
        let mut doc = ModelDocument::new(&params, Variant::Full, &Hyperparams::default(), 0, false);
        doc.version = 99;
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        fs::write(&p, serde_json::to_string(&doc).unwrap()).unwrap();
        assert!(load_model(&p).is_err());
    }

    #[test]
    fn trace_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let rec = TraceRecord { iter: 1, objective: 0.5, r1: 0.1, r2: 0.2, s1: 0.0, s2: 0.0, mu: 0.33, clamped_rows: 2 };
        write_trace_csv(&p, &[rec]).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text, "iter,objective,r1,r2,mu,clamped_rows\n1,0.5,0.1,0.2,0.33,2\n");
    }
}
