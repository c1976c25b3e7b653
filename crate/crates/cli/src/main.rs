//! `slkl` - benchmark harness for the low-rank kernel learning toolkit.

mod config;
mod experiment;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, Method, Settings};

#[derive(Parser)]
#[command(
    name = "slkl",
    about = "Seeded multi-run kernel regression benchmarks (SLKL vs exact KRR baselines)",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark experiment: runs x methods x M trainings, summary +
    /// per-run traces under --outdir.
    Run(CommonArgs),
    /// Sweep mean final support size m0 over an M x nu grid (slkl only).
    SweepM0(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Optional flat `key = value` config file; flags override its values.
    config: Option<PathBuf>,

    /// Dataset kind: sinc (generated) or file (see --data-file).
    #[arg(long)]
    dataset: Option<String>,
    /// Delimited text file (comma or whitespace separated).
    #[arg(long)]
    data_file: Option<PathBuf>,
    /// 0-based target column of the data file.
    #[arg(long)]
    target_col: Option<usize>,
    /// Skip the first line of the data file.
    #[arg(long)]
    header: bool,
    /// Comma-separated subset of: slkl, krrn, krrm, unif.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Candidate-set sizes M, comma-separated.
    #[arg(long, value_delimiter = ',')]
    m_values: Option<Vec<usize>>,
    /// Sparsity weight(s); a single value for run, a grid for sweep-m0.
    #[arg(long, value_delimiter = ',')]
    nu: Option<Vec<f64>>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Relative stopping tolerance.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Repetitions per cell; run r uses seed = --seed + r.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// precompute or on-the-fly.
    #[arg(long)]
    column_mode: Option<String>,
    /// second or half-second.
    #[arg(long)]
    newton_denominator: Option<String>,
    #[arg(long)]
    outdir: Option<PathBuf>,
    /// Parallel training runs.
    #[arg(long)]
    jobs: Option<usize>,
    /// Rows to train on (file datasets default to 3/4 of the rows).
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    /// Train-target noise level for the generated sinc data.
    #[arg(long)]
    snr_db: Option<f64>,
    /// Gaussian kernel width sigma^2.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Categorical data-file columns to one-hot encode, comma-separated.
    #[arg(long, value_delimiter = ',')]
    one_hot_cols: Option<Vec<usize>>,
    /// Standardize file-dataset features (true by default).
    #[arg(long)]
    standardize: Option<bool>,
}

impl CommonArgs {
    fn settings(&self) -> Result<Settings, ConfigError> {
        let methods = match &self.methods {
            None => None,
            Some(raw) => Some(
                raw.iter()
                    .map(|s| s.parse::<Method>())
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };
        Ok(Settings {
            dataset: self.dataset.clone(),
            data_file: self.data_file.clone(),
            target_col: self.target_col,
            header: if self.header { Some(true) } else { None },
            methods,
            m_values: self.m_values.clone(),
            nu: self.nu.clone(),
            lambda: self.lambda,
            epsilon: self.epsilon,
            runs: self.runs,
            seed: self.seed,
            max_iters: self.max_iters,
            column_mode: self.column_mode.clone(),
            newton_denominator: self.newton_denominator.clone(),
            outdir: self.outdir.clone(),
            jobs: self.jobs,
            n_train: self.n_train,
            n_test: self.n_test,
            snr_db: self.snr_db,
            sigma2: self.sigma2,
            one_hot_cols: self.one_hot_cols.clone(),
            standardize: self.standardize,
        })
    }

    fn merged(&self) -> Result<config::ExperimentConfig, ConfigError> {
        let base = match &self.config {
            Some(path) => Settings::from_file(path)?,
            None => Settings::default(),
        };
        base.overridden_by(self.settings()?).finalize()
    }
}

fn run(cli: Cli) -> Result<(), anyhow::Error> {
    match cli.command {
        Command::Run(args) => {
            let config = args.merged()?;
            experiment::run_experiment(&config)?;
            println!("wrote {}", config.outdir.join("report.txt").display());
        }
        Command::SweepM0(args) => {
            let config = args.merged()?;
            experiment::sweep_m0(&config)?;
            println!("wrote {}", config.outdir.join("report.txt").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version output is not an error.
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
