//! Synthetic sinc data generation, delimited-file ingestion, train/test
//! splitting and feature standardization.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::kernel::Dataset;

/// Sizes and seed of a train/test split.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

// Substreams: changing n_test never alters the train set.
const TRAIN_FEATURE_STREAM: u64 = 10;
const TRAIN_NOISE_STREAM: u64 = 11;
const TEST_STREAM: u64 = 12;
const SHUFFLE_STREAM: u64 = 13;

fn sinc(r: f64) -> f64 {
    if r == 0.0 {
        1.0
    } else {
        r.sin() / r
    }
}

/// Generates the sinc regression problem: 2-D features uniform on [-5, 5],
/// clean target `sin(||x||)/||x||`. Train targets get additive Gaussian noise
/// at the requested signal-to-noise ratio; test targets are noise-free.
pub fn gen_sinc(n_train: usize, n_test: usize, snr_db: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::InvalidParameter(
            "n_train and n_test must be at least 1".into(),
        ));
    }

    let mut feat_rng = ChaCha8Rng::seed_from_u64(seed);
    feat_rng.set_stream(TRAIN_FEATURE_STREAM);
    let train_features = DMatrix::from_fn(n_train, 2, |_, _| feat_rng.gen_range(-5.0..5.0));
    let clean: DVector<f64> = DVector::from_fn(n_train, |i, _| {
        sinc(train_features.row(i).transpose().norm())
    });

    // noise variance from the empirical signal power of the clean targets
    let signal_power = clean.norm_squared() / n_train as f64;
    let noise_var = signal_power / 10f64.powf(snr_db / 10.0);
    let normal = Normal::new(0.0, noise_var.sqrt())
        .map_err(|e| Error::InvalidParameter(format!("bad noise parameters: {e}")))?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(TRAIN_NOISE_STREAM);
    let train_targets = DVector::from_fn(n_train, |i, _| clean[i] + normal.sample(&mut noise_rng));

    let mut test_rng = ChaCha8Rng::seed_from_u64(seed);
    test_rng.set_stream(TEST_STREAM);
    let test_features = DMatrix::from_fn(n_test, 2, |_, _| test_rng.gen_range(-5.0..5.0));
    let test_targets = DVector::from_fn(n_test, |i, _| {
        sinc(test_features.row(i).transpose().norm())
    });

    let train = Dataset::new(train_features, train_targets, "sinc-train")?;
    let test = Dataset::new(test_features, test_targets, "sinc-test")?;
    Ok((train, test))
}

/// Options for `load_delimited`.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// None: split on any run of whitespace. Some(c): split on that byte.
    pub delimiter: Option<char>,
    /// Skip one header line.
    pub header: bool,
    /// Columns (0-based, in file order) to one-hot encode instead of parsing
    /// as numbers. Category order is first-appearance order.
    pub one_hot_columns: Vec<usize>,
}

/// Reads a delimited numeric text file into a dataset. `target_column` is a
/// 0-based column index in file order; the remaining columns become features.
pub fn load_delimited(
    path: impl AsRef<Path>,
    target_column: usize,
    options: &LoadOptions,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut raw_rows: Vec<Vec<String>> = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        if options.header && line_no == 0 {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = match options.delimiter {
            Some(d) => line.split(d).map(|s| s.trim().to_string()).collect(),
            None => line.split_whitespace().map(|s| s.to_string()).collect(),
        };
        raw_rows.push(fields);
    }
    if raw_rows.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "{} contains no data rows",
            path.display()
        )));
    }

    let arity = raw_rows[0].len();
    for (r, row) in raw_rows.iter().enumerate() {
        if row.len() != arity {
            return Err(Error::DataFormat {
                row: r,
                col: row.len(),
                message: format!("expected {arity} fields, found {}", row.len()),
            });
        }
    }
    if target_column >= arity {
        return Err(Error::InvalidParameter(format!(
            "target column {target_column} out of range for {arity}-column file"
        )));
    }
    if options.one_hot_columns.contains(&target_column) {
        return Err(Error::InvalidParameter(
            "target column cannot be one-hot encoded".into(),
        ));
    }

    // category vocabulary per one-hot column, in first-appearance order
    let mut vocab: Vec<(usize, Vec<String>)> = options
        .one_hot_columns
        .iter()
        .map(|&c| (c, Vec::new()))
        .collect();
    for row in &raw_rows {
        for (col, cats) in vocab.iter_mut() {
            let v = &row[*col];
            if !cats.contains(v) {
                cats.push(v.clone());
            }
        }
    }

    let d: usize = (0..arity)
        .filter(|&c| c != target_column)
        .map(|c| {
            vocab
                .iter()
                .find(|(vc, _)| *vc == c)
                .map_or(1, |(_, cats)| cats.len())
        })
        .sum();

    let n = raw_rows.len();
    let mut features = DMatrix::zeros(n, d);
    let mut targets = DVector::zeros(n);
    for (r, row) in raw_rows.iter().enumerate() {
        let mut out_col = 0;
        for (c, field) in row.iter().enumerate() {
            if c == target_column {
                targets[r] = parse_number(field, r, c)?;
                continue;
            }
            if let Some((_, cats)) = vocab.iter().find(|(vc, _)| *vc == c) {
                let pos = cats.iter().position(|v| v == field).unwrap();
                features[(r, out_col + pos)] = 1.0;
                out_col += cats.len();
            } else {
                features[(r, out_col)] = parse_number(field, r, c)?;
                out_col += 1;
            }
        }
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into());
    Dataset::new(features, targets, name)
}

fn parse_number(field: &str, row: usize, col: usize) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::DataFormat {
        row,
        col,
        message: format!("cannot parse {field:?} as a number"),
    })
}

/// Splits a dataset into train/test by a seeded shuffle of the row order.
pub fn shuffle_split(data: &Dataset, split: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let n = data.n();
    if split.n_train == 0 || split.n_train + split.n_test > n {
        return Err(Error::InvalidParameter(format!(
            "cannot split {n} rows into {} train + {} test",
            split.n_train, split.n_test
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(split.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let order = rand::seq::index::sample(&mut rng, n, n).into_vec();

    let take = |rows: &[usize], tag: &str| -> Result<Dataset> {
        let mut features = DMatrix::zeros(rows.len(), data.dim());
        let mut targets = DVector::zeros(rows.len());
        for (r, &i) in rows.iter().enumerate() {
            features.row_mut(r).copy_from(&data.features.row(i));
            targets[r] = data.targets[i];
        }
        Dataset::new(features, targets, format!("{}-{tag}", data.name))
    };
    let train = take(&order[..split.n_train], "train")?;
    let test = take(&order[split.n_train..split.n_train + split.n_test], "test")?;
    Ok((train, test))
}

/// Per-feature affine map fitted on a training set.
#[derive(Debug, Clone)]
pub struct Standardizer {
    pub mean: DVector<f64>,
    pub std: DVector<f64>,
}

impl Standardizer {
    /// Fits per-feature mean and standard deviation. Constant features keep
    /// std = 1 (centered only).
    pub fn fit(train: &Dataset) -> Self {
        let n = train.n() as f64;
        let d = train.dim();
        let mut mean = DVector::zeros(d);
        for i in 0..train.n() {
            mean += train.features.row(i).transpose();
        }
        mean /= n;
        let mut var = DVector::zeros(d);
        for i in 0..train.n() {
            let centered = train.features.row(i).transpose() - &mean;
            var += centered.component_mul(&centered);
        }
        var /= n;
        let std = var.map(|v| if v.sqrt() > 0.0 { v.sqrt() } else { 1.0 });
        Standardizer { mean, std }
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        let mut features = data.features.clone();
        for i in 0..data.n() {
            for j in 0..data.dim() {
                features[(i, j)] = (features[(i, j)] - self.mean[j]) / self.std[j];
            }
        }
        Dataset::new(features, data.targets.clone(), data.name.clone())
    }
}

/// Standardizes the training set to zero mean / unit variance per feature and
/// applies the same affine map to the other datasets.
pub fn standardize(train: &Dataset, others: &[&Dataset]) -> Result<(Dataset, Vec<Dataset>, Standardizer)> {
    let scaler = Standardizer::fit(train);
    let train_out = scaler.apply(train)?;
    let others_out = others
        .iter()
        .map(|d| scaler.apply(d))
        .collect::<Result<Vec<_>>>()?;
    Ok((train_out, others_out, scaler))
}
