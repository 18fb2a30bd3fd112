use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn i2ldl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_i2ldl"))
        .args(args)
        .env("I2LDL_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn write_csv(p: &Path, m: &DMatrix<f64>) {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    fs::write(p, s).unwrap();
}

/// Labels that are an affine function of the features and lie on the simplex:
/// each row mixes fixed distributions with weights `x_j / d` and the rest on
/// a base distribution.
fn affine_dataset(n: usize, d: usize, m: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut protos = DMatrix::<f64>::zeros(d + 1, m);
    for r in 0..=d {
        let raw: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.05).collect();
        let s: f64 = raw.iter().sum();
        for j in 0..m {
            protos[(r, j)] = raw[j] / s;
        }
    }
    let x = DMatrix::from_fn(n, d, |_, _| rng.random::<f64>());
    let mut labels = DMatrix::zeros(n, m);
    for i in 0..n {
        let mut base = 1.0;
        for r in 0..d {
            let w = x[(i, r)] / d as f64;
            base -= w;
            for j in 0..m {
                labels[(i, j)] += w * protos[(r + 1, j)];
            }
        }
        for j in 0..m {
            labels[(i, j)] += base * protos[(0, j)];
        }
    }
    (x, labels)
}

#[test]
fn report_validates_against_shipped_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = i2ldl(&["run", "--omega", "0.5", "--variant", "full", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out.join("report.json"));
    let schema: Value = serde_json::from_str(i2ldl::experiment::REPORT_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(&report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
    assert_eq!(report["folds"].as_array().unwrap().len(), 10);
    for metric in ["chebyshev", "clark", "canberra", "kl", "cosine", "intersection"] {
        assert!(report["aggregate"][metric]["mean"].is_f64(), "{metric}");
    }
    assert!(report["folds"].as_array().unwrap().iter().all(|f| f["converged"].is_boolean()));
    for f in 0..10 {
        assert!(out.join(format!("trace_fold_{f}.csv")).exists());
    }
}

#[test]
fn baseline_recovers_affine_labels() {
    let dir = tempfile::tempdir().unwrap();
    let (x, labels) = affine_dataset(200, 5, 4, 3);
    let f = dir.path().join("f.csv");
    let l = dir.path().join("l.csv");
    write_csv(&f, &x);
    write_csv(&l, &labels);
    let out = dir.path().join("out");
    let o = i2ldl(&[
        "run", "--features", path(&f), "--labels", path(&l), "--omega", "0", "--gamma", "1",
        "--variant", "baseline", "--lambda1", "0.005", "--out", path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cheb = read_json(&out.join("report.json"))["aggregate"]["chebyshev"]["mean"].as_f64().unwrap();
    assert!(cheb <= 1e-3, "chebyshev {cheb}");
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "config_version = 1\nsynthetic_n = 40\nfolds = 4\ngamma = 3.0\nmax_iters = 10\nvariant = \"no-sparsity\"\n").unwrap();
    let out = dir.path().join("out");
    let o = i2ldl(&["run", "--config", path(&cfg), "--folds", "2", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["folds"].as_array().unwrap().len(), 2);
    assert_eq!(report["variant"], "no-sparsity");
    assert_eq!(report["config"]["gamma"], 3.0);
    assert_eq!(report["dataset"]["n"], 40);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "config_version = 1\nomega = 0.5\nlamda1 = 0.1\n").unwrap();
    let o = i2ldl(&["run", "--config", path(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.toml:3") && err.contains("lamda1"), "{err}");

    let o = i2ldl(&["run", "--omega", "0.9", "--out", path(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("omega"));

    let o = i2ldl(&["run", "--features", "/nonexistent/f.csv", "--labels", "/nonexistent/l.csv"]);
    assert_eq!(o.status.code(), Some(2));

    let o = i2ldl(&["run", "--variant", "dense"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn thread_variable_is_validated() {
    let o = Command::new(env!("CARGO_BIN_EXE_i2ldl"))
        .args(["eval", "--truth", "a", "--pred", "b"])
        .env("I2LDL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("I2LDL_THREADS"));
}

#[test]
fn synth_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let o = i2ldl(&["synth", "--out", path(dir.path()), "--name", "toy", "--n", "30", "--m", "4", "--seed", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let labels = dir.path().join("toy.labels.csv");
    assert!(dir.path().join("toy.features.csv").exists());
    let json = dir.path().join("m.json");
    let o = i2ldl(&["eval", "--truth", path(&labels), "--pred", path(&labels), "--out", path(&json)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_json(&json);
    assert_eq!(m["count"], 30);
    assert_eq!(m["chebyshev"]["mean"], 0.0);
    assert!((m["intersection"]["mean"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn eval_rejects_mismatched_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    fs::write(&a, "0.5,0.5\n").unwrap();
    fs::write(&b, "0.2,0.3,0.5\n").unwrap();
    let o = i2ldl(&["eval", "--truth", path(&a), "--pred", path(&b)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn grid_and_ablate_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.toml");
    fs::write(
        &cfg,
        "config_version = 1\nsynthetic_n = 60\nfolds = 3\nmax_iters = 15\ngrid_lambda1 = [0.1, 1.0]\ngrid_lambda2 = [0.1]\ngrid_lambda3 = [0.05, 0.5]\n",
    )
    .unwrap();
    let out = dir.path().join("grid");
    let o = i2ldl(&["grid", "--config", path(&cfg), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("grid.csv")).unwrap().lines().count(), 5);
    let best = read_json(&out.join("best.json"));
    assert_eq!(best["grid_size"], 4);
    assert_eq!(best["test_checksum_before"], best["test_checksum_after"]);

    let out = dir.path().join("abl");
    let o = i2ldl(&["ablate", "--config", path(&cfg), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("ablation.csv")).unwrap();
    let models: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(models, ["full", "no-low-rank", "no-sparsity", "baseline"]);
}
