use std::fs;
use std::path::{Path, PathBuf};

use super::LabelDistributionDataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

struct Table {
    header: Option<Vec<String>>,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

fn split_fields(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

fn parse_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut header = None;
    let mut cols = None;
    let mut values = Vec::new();
    let mut rows = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim().trim_start_matches('\u{feff}');
        if line.is_empty() {
            continue;
        }
        let fields = split_fields(line);
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        let parsed = match parsed {
            Ok(v) => v,
            Err(_) if rows == 0 && header.is_none() => {
                header = Some(fields.iter().map(|s| s.to_string()).collect::<Vec<_>>());
                continue;
            }
            Err(e) => return Err(parse_err(line_no, format!("malformed number: {e}"))),
        };
        if let Some(v) = parsed.iter().find(|v| !v.is_finite()) {
            return Err(parse_err(line_no, format!("non-finite value {v}")));
        }
        match cols {
            None => cols = Some(parsed.len()),
            Some(c) if c != parsed.len() => {
                return Err(parse_err(
                    line_no,
                    format!("expected {c} fields, found {}", parsed.len()),
                ))
            }
            _ => {}
        }
        values.extend(parsed);
        rows += 1;
    }
    let cols = cols.ok_or_else(|| parse_err(0, "no numeric rows".into()))?;
    if let Some(h) = &header {
        if h.len() != cols {
            return Err(parse_err(1, format!("header has {} fields, rows have {cols}", h.len())));
        }
    }
    Ok(Table {
        header,
        rows,
        cols,
        values,
    })
}

/// Reads a numeric CSV (comma or whitespace delimited, optional header row).
pub fn load_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let t = parse_table(path.as_ref())?;
    Ok(Matrix::from_row_slice(t.rows, t.cols, &t.values))
}

/// Writes a matrix as comma-separated values with round-trip exact formatting.
pub fn save_matrix(path: impl AsRef<Path>, m: &Matrix, header: Option<&[String]>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Loads a features file and a labels file into a validated dataset. A header
/// row in the labels file supplies label names.
pub fn load_dataset(
    features_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<LabelDistributionDataset> {
    let f = parse_table(features_path.as_ref())?;
    let l = parse_table(labels_path.as_ref())?;
    if f.rows != l.rows {
        return Err(Error::ShapeMismatch(format!(
            "{} has {} rows, {} has {} rows",
            features_path.as_ref().display(),
            f.rows,
            labels_path.as_ref().display(),
            l.rows
        )));
    }
    LabelDistributionDataset::new(
        Matrix::from_row_slice(f.rows, f.cols, &f.values),
        Matrix::from_row_slice(l.rows, l.cols, &l.values),
        l.header,
    )
}

/// Writes `<name>.features.csv` and `<name>.labels.csv` into `dir` and returns
/// both paths.
pub fn save_dataset(
    ds: &LabelDistributionDataset,
    dir: impl AsRef<Path>,
    name: &str,
) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let fp = dir.join(format!("{name}.features.csv"));
    let lp = dir.join(format!("{name}.labels.csv"));
    save_matrix(&fp, &ds.features, None)?;
    save_matrix(&lp, &ds.labels, ds.label_names.as_deref())?;
    Ok((fp, lp))
}

/// Writes a 0/1 mask as CSV.
pub fn save_mask(path: impl AsRef<Path>, mask: &Matrix) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for i in 0..mask.nrows() {
        let row: Vec<&str> = mask
            .row(i)
            .iter()
            .map(|v| if *v != 0.0 { "1" } else { "0" })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a 0/1 mask written by [`save_mask`].
pub fn load_mask(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let m = load_matrix(path)?;
    if let Some(v) = m.iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("mask entry {v} is not 0 or 1"),
        });
    }
    Ok(m)
}
