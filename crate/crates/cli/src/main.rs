use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use i2ldl::data::{generate_synthetic, load_matrix, save_dataset, SyntheticSpec};
use i2ldl::experiment::{
    init_thread_pool_from_env, run_ablation_suite, run_experiment, run_grid, ExperimentConfig,
};
use i2ldl::metrics::{evaluate, Metric, MetricReport};
use i2ldl::solver::Variant;
use i2ldl::Error;

#[derive(Parser)]
#[command(name = "i2ldl", version, about = "Label distribution learning from incomplete, imbalanced labels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-validate one model and write report.json, report.csv and traces.
    Run(ExperimentArgs),
    /// Select λ₁, λ₂, λ₃ by inner cross-validation; writes grid.csv and best.json.
    Grid(ExperimentArgs),
    /// Compare the full model with its reduced forms and the baseline.
    Ablate(ExperimentArgs),
    /// Write a synthetic dataset as a features/labels CSV pair.
    Synth(SynthArgs),
    /// Score a prediction file against a ground-truth file.
    Eval(EvalArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Missing rate of training label entries.
    #[arg(long)]
    omega: Option<f64>,
    /// Imbalance factor; 1 disables induction.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    lambda3: Option<f64>,
    #[arg(long)]
    rank: Option<usize>,
    /// full, no-low-rank, no-sparsity or baseline.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Grid ranking metric.
    #[arg(long)]
    selection_metric: Option<String>,
    /// Do not append a constant feature.
    #[arg(long)]
    no_bias: bool,
    /// Save each fold's model as JSON.
    #[arg(long)]
    save_models: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "synthetic")]
    name: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Rank of the planted low-rank factor.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Also write the metrics as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    Variant::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
        format!("unknown variant {s:?}, expected one of {}", names.join(", "))
    })
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone().into(); })*
            };
        }
        set!(features, labels);
        set!(omega, gamma, lambda1, lambda2, lambda3, variant, folds, seed, out, max_iters, test_fraction, selection_metric);
        if self.rank.is_some() {
            cfg.rank = self.rank;
        }
        if self.no_bias {
            cfg.bias_column = false;
        }
        if self.save_models {
            cfg.save_models = true;
        }
        Ok(cfg)
    }
}

fn print_metrics(label: &str, report: &MetricReport) {
    println!("{label}");
    for m in Metric::ALL {
        let s = report.get(m);
        println!("  {:<13} {:.4} ± {:.4}", m.name(), s.mean, s.std);
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    init_thread_pool_from_env()?;
    match cli.command {
        Command::Run(args) => {
            let cfg = args.config()?;
            let report = run_experiment(&cfg)?;
            let converged = report.folds.iter().filter(|f| f.converged).count();
            print_metrics(
                &format!("{} over {} folds ({converged} converged)", report.variant.name(), report.folds.len()),
                &report.aggregate,
            );
            println!("wrote {}", cfg.out.display());
        }
        Command::Grid(args) => {
            let cfg = args.config()?;
            let best = run_grid(&cfg)?;
            println!(
                "best of {} by {}: lambda1={} lambda2={} lambda3={}",
                best.grid_size, best.selection_metric, best.lambda1, best.lambda2, best.lambda3
            );
            print_metrics("held-out", &best.test);
            println!("wrote {}", cfg.out.display());
        }
        Command::Ablate(args) => {
            let cfg = args.config()?;
            let report = run_ablation_suite(&cfg)?;
            let names = Metric::ALL.map(|m| format!("{:>12}", m.name())).join(" ");
            println!("{:<12} {names}", "model");
            for row in &report.rows {
                let vals = row.aggregate.means().map(|v| format!("{v:>12.4}")).join(" ");
                println!("{:<12} {vals}", row.variant.name());
            }
            println!("wrote {}", cfg.out.display());
        }
        Command::Synth(args) => {
            let d = SyntheticSpec::default();
            let spec = SyntheticSpec {
                n: args.n.unwrap_or(d.n),
                d: args.d.unwrap_or(d.d),
                m: args.m.unwrap_or(d.m),
                k_true: args.k.unwrap_or(d.k_true),
                sparse_density: args.density.unwrap_or(d.sparse_density),
                noise: args.noise.unwrap_or(d.noise),
                signal_scale: args.scale.unwrap_or(d.signal_scale),
                seed: args.seed,
            };
            let (ds, _) = generate_synthetic(&spec).map_err(|e| match e {
                Error::BadShape(message) => Error::Config { field: "synth".into(), message },
                other => other,
            })?;
            std::fs::create_dir_all(&args.out).map_err(|source| Error::Io { path: args.out.clone(), source })?;
            let (f, l) = save_dataset(&ds, &args.out, &args.name)?;
            println!("wrote {} and {}", f.display(), l.display());
        }
        Command::Eval(args) => {
            let truth = load_matrix(&args.truth)?;
            let pred = load_matrix(&args.pred)?;
            let report = evaluate(&truth, &pred)?;
            print_metrics(&format!("{} rows", report.count), &report);
            if let Some(out) = args.out {
                let text = serde_json::to_string_pretty(&report)? + "\n";
                std::fs::write(&out, text).map_err(|source| Error::Io { path: out.clone(), source })?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
