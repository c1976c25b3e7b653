//! Experiment orchestration: seeded multi-run benchmarks and the m0 sweep.

use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;

use slkl_core::datasets::{gen_sinc, load_delimited, shuffle_split, standardize, LoadOptions, SplitSpec};
use slkl_core::regression::DENSE_BASELINE_CAP;
use slkl_core::{
    krr_full, krr_subset, mse, sample_candidate_set, train_slkl, unif_baseline, Dataset,
    KernelSpec, StopReason, TrainConfig, TrainTrace,
};

use crate::config::{ConfigError, DatasetChoice, ExperimentConfig, Method};

/// One finished training/prediction run.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub method: Method,
    /// Candidate-set size; for KRRn this is n.
    pub m: usize,
    pub seed: u64,
    pub nu: Option<f64>,
    pub lambda: f64,
    pub mse: Option<f64>,
    pub m0: Option<usize>,
    pub iterations: Option<usize>,
    pub wall_secs: f64,
    pub skipped: bool,
}

impl RunRecord {
    fn status(&self) -> &'static str {
        if self.skipped {
            "skipped"
        } else {
            "ok"
        }
    }
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub records: Vec<RunRecord>,
    pub n_train: usize,
    pub n_test: usize,
}

pub struct Prepared {
    pub train: Arc<Dataset>,
    pub test: Dataset,
    pub spec: KernelSpec,
}

fn sniff_delimiter(path: &Path) -> Result<Option<char>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first)?;
    Ok(if first.contains(',') { Some(',') } else { None })
}

/// Loads or generates the dataset named by the config and splits it.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let spec = KernelSpec::gaussian(config.sigma2)?;
    match &config.dataset {
        DatasetChoice::Sinc => {
            let n_train = config.n_train.unwrap_or(1000);
            let n_test = config.n_test.unwrap_or(1000);
            let (train, test) = gen_sinc(n_train, n_test, config.snr_db, config.seed)?;
            Ok(Prepared { train: Arc::new(train), test, spec })
        }
        DatasetChoice::File(path) => {
            let options = LoadOptions {
                delimiter: sniff_delimiter(path)?,
                header: config.header,
                one_hot_columns: config.one_hot_cols.clone(),
            };
            let data = load_delimited(path, config.target_col, &options)
                .with_context(|| format!("loading {}", path.display()))?;
            let n = data.n();
            let n_train = config.n_train.unwrap_or(n * 3 / 4);
            let n_test = config.n_test.unwrap_or(n.saturating_sub(n_train));
            let split = SplitSpec { n_train, n_test, seed: config.seed };
            let (train_raw, test_raw) = shuffle_split(&data, &split)?;
            if config.standardize {
                let (train, mut others, _) = standardize(&train_raw, &[&test_raw])?;
                Ok(Prepared { train: Arc::new(train), test: others.remove(0), spec })
            } else {
                Ok(Prepared { train: Arc::new(train_raw), test: test_raw, spec })
            }
        }
    }
}

struct Task {
    method: Method,
    m: usize,
    nu: f64,
    run_idx: usize,
}

fn train_config(config: &ExperimentConfig, nu: f64, m: usize, seed: u64) -> TrainConfig {
    let mut tc = TrainConfig::new(nu, m, seed);
    tc.lambda = config.lambda;
    tc.epsilon = config.epsilon;
    tc.column_mode = config.column_mode;
    tc.newton_denominator = config.newton_denominator;
    if let Some(cap) = config.max_iters {
        tc.max_iters = cap;
    }
    tc
}

fn write_trace(path: &Path, trace: &TrainTrace) -> Result<()> {
    let mut out = String::from("iteration,objective,m0\n");
    for (i, f) in trace.objective_history.iter().enumerate() {
        let m0 = if i == 0 { 0 } else { trace.m0_history[i - 1] };
        out.push_str(&format!("{i},{f},{m0}\n"));
    }
    fs::write(path, out).with_context(|| format!("writing trace {}", path.display()))?;
    Ok(())
}

fn run_task(
    config: &ExperimentConfig,
    prepared: &Prepared,
    task: &Task,
    runs_dir: Option<&Path>,
) -> Result<RunRecord> {
    let seed = config.seed + task.run_idx as u64;
    let started = Instant::now();
    let train = &prepared.train;
    let test = &prepared.test;
    let spec = &prepared.spec;

    let mut record = RunRecord {
        method: task.method,
        m: task.m,
        seed,
        nu: None,
        lambda: config.lambda,
        mse: None,
        m0: None,
        iterations: None,
        wall_secs: 0.0,
        skipped: false,
    };

    match task.method {
        Method::Slkl => {
            record.nu = Some(task.nu);
            let tc = train_config(config, task.nu, task.m, seed);
            let (model, trace) = train_slkl(spec, train, &tc)?;
            let preds = model.predict_all(&test.features)?;
            record.mse = Some(mse(&preds, &test.targets)?);
            record.m0 = Some(model.support_size());
            record.iterations = Some(trace.iterations);
            if trace.stop_reason == StopReason::MaxIters {
                eprintln!(
                    "note: slkl M={} seed={seed} hit the iteration cap before converging",
                    task.m
                );
            }
            if let Some(dir) = runs_dir {
                write_trace(&dir.join(format!("slkl_{}_{}.csv", task.m, seed)), &trace)?;
            }
        }
        Method::Krrn => {
            if train.n() > DENSE_BASELINE_CAP {
                record.skipped = true;
            } else {
                let model = krr_full(spec, train, config.lambda)?;
                let preds = model.predict_all(&test.features)?;
                record.mse = Some(mse(&preds, &test.targets)?);
            }
            record.m = train.n();
        }
        Method::Krrm => {
            let subset = sample_candidate_set(train.n(), task.m, seed)?;
            let model = krr_subset(spec, train, &subset, config.lambda)?;
            let preds = model.predict_all(&test.features)?;
            record.mse = Some(mse(&preds, &test.targets)?);
        }
        Method::Unif => {
            let candidates = sample_candidate_set(train.n(), task.m, seed)?;
            let model = unif_baseline(spec, train, &candidates, config.lambda)?;
            let preds = model.predict_all(&test.features)?;
            record.mse = Some(mse(&preds, &test.targets)?);
            record.m0 = Some(model.support_size());
        }
    }
    record.wall_secs = started.elapsed().as_secs_f64();
    Ok(record)
}

fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| anyhow!("cannot build thread pool: {e}"))?
        .install(f)
}

/// The `run` subcommand: runs x methods x M trainings plus artifacts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.nu_values.len() != 1 {
        return Err(ConfigError(format!(
            "run expects exactly one nu value, got {} (use sweep-m0 for nu grids)",
            config.nu_values.len()
        ))
        .into());
    }
    let nu = config.nu_values[0];
    for &m in &config.m_values {
        if m < 1 {
            return Err(ConfigError("m-values must be positive".into()).into());
        }
    }

    let prepared = prepare(config)?;
    for &m in &config.m_values {
        if m > prepared.train.n() {
            return Err(ConfigError(format!(
                "M = {m} exceeds the training-set size {}",
                prepared.train.n()
            ))
            .into());
        }
    }

    let runs_dir = config.outdir.join("runs");
    fs::create_dir_all(&runs_dir)
        .with_context(|| format!("creating {}", runs_dir.display()))?;

    let mut tasks = Vec::new();
    for &method in &config.methods {
        if method == Method::Krrn {
            // KRRn ignores M and the run seed: one deterministic cell.
            tasks.push(Task { method, m: prepared.train.n(), nu, run_idx: 0 });
            continue;
        }
        for &m in &config.m_values {
            for run_idx in 0..config.runs {
                tasks.push(Task { method, m, nu, run_idx });
            }
        }
    }

    let records: Vec<RunRecord> = in_pool(config.jobs, || {
        tasks
            .par_iter()
            .map(|task| run_task(config, &prepared, task, Some(&runs_dir)))
            .collect()
    })?;

    let report = ExperimentReport {
        records,
        n_train: prepared.train.n(),
        n_test: prepared.test.n(),
    };
    write_summary(&config.outdir.join("summary.csv"), &report.records)?;
    write_timings(&config.outdir.join("timings.csv"), &report.records)?;
    fs::write(config.outdir.join("report.txt"), render_report(config, &report))
        .context("writing report.txt")?;
    Ok(report)
}

/// The `sweep-m0` subcommand: mean final support size over an M x nu grid.
pub fn sweep_m0(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let prepared = prepare(config)?;
    for &m in &config.m_values {
        if m < 1 || m > prepared.train.n() {
            return Err(ConfigError(format!(
                "M = {m} out of range for training-set size {}",
                prepared.train.n()
            ))
            .into());
        }
    }
    fs::create_dir_all(&config.outdir)
        .with_context(|| format!("creating {}", config.outdir.display()))?;

    let mut tasks = Vec::new();
    for &nu in &config.nu_values {
        for &m in &config.m_values {
            for run_idx in 0..config.runs {
                tasks.push(Task { method: Method::Slkl, m, nu, run_idx });
            }
        }
    }
    let records: Vec<RunRecord> = in_pool(config.jobs, || {
        tasks
            .par_iter()
            .map(|task| run_task(config, &prepared, task, None))
            .collect()
    })?;

    let report = ExperimentReport {
        records,
        n_train: prepared.train.n(),
        n_test: prepared.test.n(),
    };
    write_summary(&config.outdir.join("summary.csv"), &report.records)?;
    write_timings(&config.outdir.join("timings.csv"), &report.records)?;

    // Grid of mean final m0, nu down the rows, M across the columns.
    let mut grid = String::from("nu,m,mean_m0\n");
    let mut table = format!("mean final m0 over {} runs\n\n{:>12}", config.runs, "nu \\ M");
    for &m in &config.m_values {
        table.push_str(&format!("{m:>10}"));
    }
    table.push('\n');
    for &nu in &config.nu_values {
        table.push_str(&format!("{nu:>12}"));
        for &m in &config.m_values {
            let cell: Vec<f64> = report
                .records
                .iter()
                .filter(|r| r.nu == Some(nu) && r.m == m)
                .map(|r| r.m0.unwrap_or(0) as f64)
                .collect();
            let mean = cell.iter().sum::<f64>() / cell.len() as f64;
            grid.push_str(&format!("{nu},{m},{mean}\n"));
            table.push_str(&format!("{mean:>10.1}"));
        }
        table.push('\n');
    }
    fs::write(config.outdir.join("m0_grid.csv"), grid).context("writing m0_grid.csv")?;
    fs::write(config.outdir.join("report.txt"), table).context("writing report.txt")?;
    Ok(report)
}

fn write_summary(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut out = String::from("method,m,seed,nu,lambda,mse,m0,iterations,status\n");
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (a.method, a.m, a.seed, a.nu.unwrap_or(0.0))
            .partial_cmp(&(b.method, b.m, b.seed, b.nu.unwrap_or(0.0)))
            .unwrap()
    });
    for r in sorted {
        let opt_f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let opt_u = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.method.label(),
            r.m,
            r.seed,
            opt_f(r.nu),
            r.lambda,
            opt_f(r.mse),
            opt_u(r.m0),
            opt_u(r.iterations),
            r.status(),
        ));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Wall times live outside summary.csv so that summaries are byte-identical
/// across reruns.
fn write_timings(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut out = String::from("method,m,seed,wall_secs\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{:.3}\n",
            r.method.label(),
            r.m,
            r.seed,
            r.wall_secs
        ));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn render_report(config: &ExperimentConfig, report: &ExperimentReport) -> String {
    let dataset = match &config.dataset {
        DatasetChoice::Sinc => "sinc".to_string(),
        DatasetChoice::File(p) => p.display().to_string(),
    };
    let mut out = format!(
        "dataset: {dataset} (n_train = {}, n_test = {})\nnu = {}, lambda = {}, epsilon = {}, runs = {}\n\n",
        report.n_train,
        report.n_test,
        config.nu_values[0],
        config.lambda,
        config.epsilon,
        config.runs
    );
    out.push_str(&format!("{:<10}", "method"));
    for &m in &config.m_values {
        out.push_str(&format!("{:>22}", format!("M = {m}")));
    }
    out.push('\n');

    let cell = |method: Method, m: usize, field: fn(&RunRecord) -> Option<f64>| -> String {
        let values: Vec<f64> = report
            .records
            .iter()
            .filter(|r| r.method == method && r.m == m && !r.skipped)
            .filter_map(field)
            .collect();
        if values.is_empty() {
            return format!("{:>22}", "skipped");
        }
        let (mean, std) = mean_std(&values);
        format!("{:>22}", format!("{mean:.4} \u{b1} {std:.4}"))
    };

    for &method in &config.methods {
        if method == Method::Krrn {
            continue;
        }
        out.push_str(&format!("{:<10}", method.label()));
        for &m in &config.m_values {
            out.push_str(&cell(method, m, |r| r.mse));
        }
        out.push('\n');
    }
    if config.methods.contains(&Method::Krrn) {
        let krrn = report
            .records
            .iter()
            .find(|r| r.method == Method::Krrn)
            .expect("krrn requested but not run");
        match krrn.mse {
            Some(v) => out.push_str(&format!("{:<10}{:>22}\n", "krrn", format!("{v:.4} (M = n)"))),
            None => out.push_str(&format!("{:<10}{:>22}\n", "krrn", "skipped (n too large)")),
        }
    }
    if config.methods.contains(&Method::Slkl) {
        out.push_str(&format!("{:<10}", "m0(slkl)"));
        for &m in &config.m_values {
            out.push_str(&cell(Method::Slkl, m, |r| r.m0.map(|v| v as f64)));
        }
        out.push('\n');
    }
    out
}
