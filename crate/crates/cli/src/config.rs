//! Experiment configuration: flat `key = value` files plus CLI overrides.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use slkl_core::{ColumnMode, NewtonDenominator};

/// A configuration problem. Exits with code 1, as opposed to runtime
/// failures (code 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Slkl,
    Krrn,
    Krrm,
    Unif,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Slkl => "slkl",
            Method::Krrn => "krrn",
            Method::Krrm => "krrm",
            Method::Unif => "unif",
        }
    }
}

impl FromStr for Method {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "slkl" => Ok(Method::Slkl),
            "krrn" => Ok(Method::Krrn),
            "krrm" => Ok(Method::Krrm),
            "unif" => Ok(Method::Unif),
            other => config_err(format!(
                "unknown method '{other}' (expected slkl, krrn, krrm or unif)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetChoice {
    Sinc,
    File(PathBuf),
}

/// Everything a single experiment needs, after defaults, config file and
/// flag overrides have been merged.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: DatasetChoice,
    pub target_col: usize,
    pub header: bool,
    pub methods: Vec<Method>,
    pub m_values: Vec<usize>,
    pub nu_values: Vec<f64>,
    pub lambda: f64,
    pub epsilon: f64,
    pub runs: usize,
    pub seed: u64,
    /// Per-run iteration cap; defaults to 100*M when absent.
    pub max_iters: Option<usize>,
    pub column_mode: ColumnMode,
    pub newton_denominator: NewtonDenominator,
    pub outdir: PathBuf,
    pub jobs: usize,
    /// Left unset, sinc defaults to 1000/1000 and delimited files to a 3:1
    /// shuffled split.
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    pub snr_db: f64,
    pub sigma2: f64,
    /// One-hot encode these raw columns when loading a delimited file.
    pub one_hot_cols: Vec<usize>,
    pub standardize: bool,
}

/// Raw settings; `None` means "not given here". Later layers win.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    pub dataset: Option<String>,
    pub data_file: Option<PathBuf>,
    pub target_col: Option<usize>,
    pub header: Option<bool>,
    pub methods: Option<Vec<Method>>,
    pub m_values: Option<Vec<usize>>,
    pub nu: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    pub epsilon: Option<f64>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub max_iters: Option<usize>,
    pub column_mode: Option<String>,
    pub newton_denominator: Option<String>,
    pub outdir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    pub snr_db: Option<f64>,
    pub sigma2: Option<f64>,
    pub one_hot_cols: Option<Vec<usize>>,
    pub standardize: Option<bool>,
}

impl Settings {
    /// Overlays `other` on top of `self`: any value set in `other` wins.
    pub fn overridden_by(mut self, other: Settings) -> Settings {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if other.$field.is_some() { self.$field = other.$field; })*
            };
        }
        take!(
            dataset, data_file, target_col, header, methods, m_values, nu, lambda, epsilon,
            runs, seed, max_iters, column_mode, newton_denominator, outdir, jobs, n_train,
            n_test, snr_db, sigma2, one_hot_cols, standardize
        );
        self
    }

    pub fn from_file(path: &Path) -> Result<Settings, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let mut pairs = HashMap::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return config_err(format!(
                    "{}:{}: expected 'key = value', got '{line}'",
                    path.display(),
                    line_no + 1
                ));
            };
            pairs.insert(key.trim().to_string(), value.trim().to_string());
        }
        Settings::from_pairs(pairs)
    }

    fn from_pairs(pairs: HashMap<String, String>) -> Result<Settings, ConfigError> {
        let mut s = Settings::default();
        for (key, value) in pairs {
            let parse_ctx = |e: String| ConfigError(format!("config key '{key}': {e}"));
            match key.as_str() {
                "dataset" => s.dataset = Some(value),
                "data-file" => s.data_file = Some(PathBuf::from(value)),
                "target-col" => s.target_col = Some(parse_one(&value).map_err(parse_ctx)?),
                "header" => s.header = Some(parse_one(&value).map_err(parse_ctx)?),
                "methods" => {
                    s.methods = Some(parse_list(&value).map_err(parse_ctx)?);
                }
                "m-values" => s.m_values = Some(parse_list(&value).map_err(parse_ctx)?),
                "nu" => s.nu = Some(parse_list(&value).map_err(parse_ctx)?),
                "lambda" => s.lambda = Some(parse_one(&value).map_err(parse_ctx)?),
                "epsilon" => s.epsilon = Some(parse_one(&value).map_err(parse_ctx)?),
                "runs" => s.runs = Some(parse_one(&value).map_err(parse_ctx)?),
                "seed" => s.seed = Some(parse_one(&value).map_err(parse_ctx)?),
                "max-iters" => s.max_iters = Some(parse_one(&value).map_err(parse_ctx)?),
                "column-mode" => s.column_mode = Some(value),
                "newton-denominator" => s.newton_denominator = Some(value),
                "outdir" => s.outdir = Some(PathBuf::from(value)),
                "jobs" => s.jobs = Some(parse_one(&value).map_err(parse_ctx)?),
                "n-train" => s.n_train = Some(parse_one(&value).map_err(parse_ctx)?),
                "n-test" => s.n_test = Some(parse_one(&value).map_err(parse_ctx)?),
                "snr-db" => s.snr_db = Some(parse_one(&value).map_err(parse_ctx)?),
                "sigma2" => s.sigma2 = Some(parse_one(&value).map_err(parse_ctx)?),
                "one-hot-cols" => s.one_hot_cols = Some(parse_list(&value).map_err(parse_ctx)?),
                "standardize" => s.standardize = Some(parse_one(&value).map_err(parse_ctx)?),
                other => return config_err(format!("unknown config key '{other}'")),
            }
        }
        Ok(s)
    }

    pub fn finalize(self) -> Result<ExperimentConfig, ConfigError> {
        let dataset = match self.dataset.as_deref() {
            None | Some("sinc") => {
                if let Some(file) = self.data_file {
                    DatasetChoice::File(file)
                } else {
                    DatasetChoice::Sinc
                }
            }
            Some("file") => match self.data_file {
                Some(file) => DatasetChoice::File(file),
                None => return config_err("dataset 'file' requires --data-file"),
            },
            Some(other) => {
                return config_err(format!("unknown dataset '{other}' (expected sinc or file)"))
            }
        };

        let column_mode = match self.column_mode.as_deref() {
            None | Some("precompute") => ColumnMode::Precompute,
            Some("on-the-fly") => ColumnMode::OnTheFly,
            Some(other) => {
                return config_err(format!(
                    "unknown column mode '{other}' (expected precompute or on-the-fly)"
                ))
            }
        };
        let newton_denominator = match self.newton_denominator.as_deref() {
            None | Some("second") => NewtonDenominator::SecondDerivative,
            Some("half-second") => NewtonDenominator::HalfSecondDerivative,
            Some(other) => {
                return config_err(format!(
                    "unknown newton denominator '{other}' (expected second or half-second)"
                ))
            }
        };

        let mut methods = self
            .methods
            .unwrap_or_else(|| vec![Method::Slkl, Method::Krrn, Method::Krrm, Method::Unif]);
        methods.sort();
        methods.dedup();
        let m_values = self.m_values.unwrap_or_else(|| vec![256, 512, 1000]);
        let nu_values = self.nu.unwrap_or_else(|| vec![0.01]);
        let runs = self.runs.unwrap_or(20);
        let lambda = self.lambda.unwrap_or(1.0);
        let epsilon = self.epsilon.unwrap_or(1e-4);

        if methods.is_empty() {
            return config_err("methods list is empty");
        }
        if m_values.is_empty() {
            return config_err("m-values list is empty");
        }
        if nu_values.is_empty() {
            return config_err("nu list is empty");
        }
        if runs == 0 {
            return config_err("runs must be at least 1");
        }
        if !(lambda > 0.0) {
            return config_err(format!("lambda must be positive, got {lambda}"));
        }
        if !(epsilon > 0.0) {
            return config_err(format!("epsilon must be positive, got {epsilon}"));
        }
        for &nu in &nu_values {
            if !(nu > 0.0) {
                return config_err(format!("nu must be positive, got {nu}"));
            }
        }

        Ok(ExperimentConfig {
            dataset,
            target_col: self.target_col.unwrap_or(0),
            header: self.header.unwrap_or(false),
            methods,
            m_values,
            nu_values,
            lambda,
            epsilon,
            runs,
            seed: self.seed.unwrap_or(0),
            max_iters: self.max_iters,
            column_mode,
            newton_denominator,
            outdir: self.outdir.unwrap_or_else(|| PathBuf::from("out")),
            jobs: self.jobs.unwrap_or(1).max(1),
            n_train: self.n_train,
            n_test: self.n_test,
            snr_db: self.snr_db.unwrap_or(10.0),
            sigma2: self.sigma2.unwrap_or(1.0),
            one_hot_cols: self.one_hot_cols.unwrap_or_default(),
            standardize: self.standardize.unwrap_or(true),
        })
    }
}

fn parse_one<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e: T::Err| format!("cannot parse '{value}': {e}"))
}

fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .filter(|part| !part.trim().is_empty())
        .map(|part| parse_one(part))
        .collect()
}
