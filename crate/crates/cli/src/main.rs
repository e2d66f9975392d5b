//! `qgnn`: train GNN/QGNN models, scan gradient variances, inspect fixtures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use serde::Serialize;

use qgnn_core::experiments::{run_case_on, variance_scan, CaseSpec, RunReport, VarianceReport, VarianceScanSpec};
use qgnn_core::graphdata::{load_dataset, Dataset, FEATURE_DIM, FEATURE_NAMES};
use qgnn_core::Error;

#[derive(Parser)]
#[command(name = "qgnn", version, about = "Quantum graph neural networks on molecule graphs")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write history.csv, summary.json and timing.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Gradient-variance scan; writes variance.csv and variance_avg.csv.
    BpScan {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Print a summary of a fixture file.
    Inspect { fixture: PathBuf },
}

/// Exit code 2 for bad input, 3 for failures while running.
enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFinite(_) | Error::Io { .. } => Failure::Runtime(e.into()),
            other => Failure::Validation(other.into()),
        }
    }
}

fn validation(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Validation(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    let result = match cli.command {
        Command::Train { config, seed, out } => train(&config, seed, &out),
        Command::BpScan { config, seed, out } => bp_scan(&config, seed, &out),
        Command::Inspect { fixture } => inspect(&fixture),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn config_error(path: &Path, e: Error) -> Failure {
    validation(anyhow::Error::from(e).context(format!("invalid config {}", path.display())))
}

fn load_fixture(path: &Path) -> Result<Dataset, Failure> {
    if !path.is_file() {
        return Err(validation(anyhow!("fixture not found: {}", path.display())));
    }
    load_dataset(path).map_err(|e| match e {
        Error::Io { .. } => validation(e),
        other => other.into(),
    })
}

fn create_out(out: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))
        .map_err(runtime)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(runtime)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_string(), |v| v.to_string())
}

#[derive(Serialize)]
struct Summary<'a> {
    framework: &'a str,
    case: u8,
    seed: u64,
    params: usize,
    n_circuits: usize,
    n_train: usize,
    n_test: usize,
    epochs: usize,
    best_epoch: Option<usize>,
    test_r2: Option<f64>,
    test_loss: Option<f64>,
    train_r2: Option<f64>,
    train_loss: Option<f64>,
    min_train_loss: Option<f64>,
}

fn train(config: &Path, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let mut spec = CaseSpec::from_file(config).map_err(|e| config_error(config, e))?;
    if let Some(seed) = seed {
        spec.train.seed = seed;
    }
    spec.train.validate()?;
    let dataset = load_fixture(&spec.fixture)?;
    create_out(out)?;

    let started = Instant::now();
    let epochs = spec.train.epochs;
    let report = run_case_on(&spec, &dataset, |r| {
        if r.epoch % 10 == 0 || r.epoch + 1 == epochs {
            eprintln!(
                "epoch {:>4}  train loss {:.6}  test loss {:.6}",
                r.epoch, r.train.loss, r.test.loss
            );
        }
    })
    .map_err(|e| match e {
        Error::NonFinite(_) => runtime(e),
        other => other.into(),
    })?;
    let wall = started.elapsed().as_secs_f64();

    write_file(&out.join("history.csv"), &history_csv(&report).map_err(runtime)?)?;
    let summary = Summary {
        framework: &report.framework,
        case: report.case,
        seed: report.seed,
        params: report.params,
        n_circuits: report.n_circuits,
        n_train: report.n_train,
        n_test: report.n_test,
        epochs,
        best_epoch: report.best_epoch,
        test_r2: report.best.and_then(|b| b.test_r2),
        test_loss: report.best.map(|b| b.test_loss).filter(|v| v.is_finite()),
        train_r2: report.best.and_then(|b| b.train_r2),
        train_loss: report.best.map(|b| b.train_loss),
        min_train_loss: report.min_train_loss,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(runtime)?;
    write_file(&out.join("summary.json"), &(json + "\n"))?;
    let timing = serde_json::json!({ "wall_seconds": wall });
    write_file(&out.join("timing.json"), &format!("{timing:#}\n"))?;
    println!("{}", serde_json::to_string(&summary).map_err(runtime)?);
    Ok(())
}

fn history_csv(report: &RunReport) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "train_loss", "train_r2", "test_loss", "test_r2"])?;
    for r in &report.history {
        w.write_record([
            r.epoch.to_string(),
            r.train.loss.to_string(),
            fmt_opt(r.train.r2),
            r.test.loss.to_string(),
            fmt_opt(r.test.r2),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn bp_scan(config: &Path, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let mut spec = VarianceScanSpec::from_file(config).map_err(|e| config_error(config, e))?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    spec.validate()?;
    create_out(out)?;
    let report = variance_scan(&spec)?;
    let (full, avg) = variance_csvs(&report).map_err(runtime)?;
    write_file(&out.join("variance.csv"), &full)?;
    write_file(&out.join("variance_avg.csv"), &avg)?;
    print!("{avg}");
    Ok(())
}

fn variance_csvs(report: &VarianceReport) -> anyhow::Result<(String, String)> {
    let mut full = csv::Writer::from_writer(Vec::new());
    full.write_record(["n_qubits", "mode", "param_index", "variance"])?;
    let mut avg = csv::Writer::from_writer(Vec::new());
    avg.write_record(["n_qubits", "mode", "avg_variance"])?;
    for c in &report.cells {
        for (mu, v) in c.per_param.iter().enumerate() {
            full.write_record([c.n_qubits.to_string(), c.mode.name().into(), mu.to_string(), v.to_string()])?;
        }
        avg.write_record([c.n_qubits.to_string(), c.mode.name().into(), c.average.to_string()])?;
    }
    Ok((
        String::from_utf8(full.into_inner()?)?,
        String::from_utf8(avg.into_inner()?)?,
    ))
}

fn inspect(fixture: &Path) -> Result<(), Failure> {
    let ds = load_fixture(fixture)?;
    if ds.is_empty() {
        return Err(validation(anyhow!("{}: no molecules", fixture.display())));
    }
    println!("{} molecules, max atoms {}", ds.len(), ds.max_atoms());
    println!("atoms {}\u{2013}{}", ds.min_atoms(), ds.max_atoms());
    println!("atom-count histogram:");
    let mut counts = std::collections::BTreeMap::new();
    for m in &ds.molecules {
        *counts.entry(m.n_atoms()).or_insert(0usize) += 1;
    }
    for (atoms, n) in counts {
        println!("  {atoms:>3} atoms: {n}");
    }
    println!("feature ranges:");
    for k in 0..FEATURE_DIM {
        let values = ds.molecules.iter().flat_map(|m| m.atom_features.iter().map(move |f| f[k]));
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        println!("  {:<18} [{lo}, {hi}]", FEATURE_NAMES[k]);
    }
    let (lo, hi) = ds
        .molecules
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m.target), hi.max(m.target)));
    println!("target range: [{lo}, {hi}]");
    Ok(())
}
