use thiserror::Error;

/// Errors produced by the training and linear-algebra primitives.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate landmark {index}: k(x_m, x_m) = {value} is not positive")]
    DegenerateLandmark { index: usize, value: f64 },

    #[error("matrix is singular (pivot {pivot:.3e} below tolerance)")]
    SingularMatrix { pivot: f64 },

    #[error("data error at row {row}, column {col}: {message}")]
    DataFormat {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
