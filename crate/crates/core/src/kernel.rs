//! Base kernel evaluation, normalized Gram columns and full Gram matrices.
//!
//! The learner never materializes the full Gram matrix; it works with the
//! normalized columns `c_m = K[:, m] / sqrt(k(x_m, x_m))`, whose outer
//! products `c_m c_m^T` are rank-1 Nystrom approximations of `K`.
//! `gram_matrix` exists for the exact baselines and for test oracles.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};

/// The base positive kernel. Only the Gaussian family is supported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `k(x, x') = exp(-||x - x'||^2 / (2 sigma2))`
    Gaussian { sigma2: f64 },
}

impl KernelSpec {
    pub fn gaussian(sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma2 must be positive and finite, got {sigma2}"
            )));
        }
        Ok(KernelSpec::Gaussian { sigma2 })
    }
}

/// A labeled collection of feature rows and regression targets.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// n x d feature matrix, one example per row.
    pub features: DMatrix<f64>,
    /// Length-n target vector.
    pub targets: DVector<f64>,
    pub name: String,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, targets: DVector<f64>, name: impl Into<String>) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::InvalidParameter(
                "dataset must have at least one row and one feature".into(),
            ));
        }
        if features.nrows() != targets.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows vs {} targets",
                features.nrows(),
                targets.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) || targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("dataset contains non-finite entries".into()));
        }
        Ok(Dataset {
            features,
            targets,
            name: name.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

/// Evaluates the kernel on a pair of feature vectors.
pub fn eval_kernel(spec: &KernelSpec, x: DVectorView<f64>, x2: DVectorView<f64>) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(Error::DimensionMismatch(format!(
            "kernel arguments have lengths {} and {}",
            x.len(),
            x2.len()
        )));
    }
    match spec {
        KernelSpec::Gaussian { sigma2 } => {
            let mut sq = 0.0;
            for (a, b) in x.iter().zip(x2.iter()) {
                let d = a - b;
                sq += d * d;
            }
            Ok((-sq / (2.0 * sigma2)).exp())
        }
    }
}

/// Computes the normalized Gram column `c_m` for landmark `m`:
/// `c_m[i] = k(x_i, x_m) / sqrt(k(x_m, x_m))`.
pub fn compute_column(spec: &KernelSpec, data: &Dataset, m: usize) -> Result<DVector<f64>> {
    let n = data.n();
    if m >= n {
        return Err(Error::InvalidParameter(format!(
            "landmark index {m} out of range for n = {n}"
        )));
    }
    let xm = data.features.row(m).transpose();
    let diag = eval_kernel(spec, xm.as_view(), xm.as_view())?;
    if diag <= 0.0 {
        return Err(Error::DegenerateLandmark { index: m, value: diag });
    }
    let scale = 1.0 / diag.sqrt();
    let mut col = DVector::zeros(n);
    for i in 0..n {
        let xi = data.features.row(i).transpose();
        col[i] = scale * eval_kernel(spec, xi.as_view(), xm.as_view())?;
    }
    Ok(col)
}

/// Materializes the full n x n Gram matrix. Baseline and oracle use only.
pub fn gram_matrix(spec: &KernelSpec, data: &Dataset) -> Result<DMatrix<f64>> {
    let n = data.n();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        let xi = data.features.row(i).transpose();
        for j in i..n {
            let xj = data.features.row(j).transpose();
            let v = eval_kernel(spec, xi.as_view(), xj.as_view())?;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn toy_dataset() -> Dataset {
        let features = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 2.0]);
        Dataset::new(features, dvector![1.0, 2.0, 3.0], "toy").unwrap()
    }

    #[test]
    fn kernel_zero_distance_is_one() {
        let spec = KernelSpec::gaussian(0.7).unwrap();
        let x = dvector![1.0, -2.0, 3.0];
        assert_eq!(eval_kernel(&spec, x.as_view(), x.as_view()).unwrap(), 1.0);
    }

    #[test]
    fn kernel_analytic_values() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let x = dvector![0.0, 0.0];
        let x2 = dvector![1.0, 1.0]; // squared distance 2
        let v = eval_kernel(&spec, x.as_view(), x2.as_view()).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);

        let spec = KernelSpec::gaussian(0.5).unwrap();
        let x2 = dvector![1.0, 0.0];
        let v = eval_kernel(&spec, x.as_view(), x2.as_view()).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn kernel_dimension_mismatch() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let x = dvector![0.0];
        let x2 = dvector![0.0, 1.0];
        assert!(eval_kernel(&spec, x.as_view(), x2.as_view()).is_err());
    }

    #[test]
    fn kernel_rejects_bad_sigma() {
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(-1.0).is_err());
        assert!(KernelSpec::gaussian(f64::NAN).is_err());
    }

    #[test]
    fn column_self_entry_is_one() {
        let spec = KernelSpec::gaussian(1.3).unwrap();
        let data = toy_dataset();
        for m in 0..data.n() {
            let c = compute_column(&spec, &data, m).unwrap();
            assert!((c[m] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn column_single_point() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let data = Dataset::new(DMatrix::from_row_slice(1, 1, &[3.0]), dvector![1.0], "one").unwrap();
        let c = compute_column(&spec, &data, 0).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn column_matches_scalar_evaluations() {
        let spec = KernelSpec::gaussian(0.9).unwrap();
        let data = toy_dataset();
        let m = 1;
        let c = compute_column(&spec, &data, m).unwrap();
        let xm = data.features.row(m).transpose();
        for i in 0..data.n() {
            let xi = data.features.row(i).transpose();
            let expected = eval_kernel(&spec, xi.as_view(), xm.as_view()).unwrap();
            assert!((c[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn column_index_out_of_range() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let data = toy_dataset();
        assert!(compute_column(&spec, &data, 3).is_err());
    }

    #[test]
    fn gram_single_point() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let data = Dataset::new(DMatrix::from_row_slice(1, 2, &[0.5, 0.5]), dvector![0.0], "p").unwrap();
        let k = gram_matrix(&spec, &data).unwrap();
        assert_eq!(k.nrows(), 1);
        assert!((k[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gram_duplicated_points_all_ones() {
        let spec = KernelSpec::gaussian(2.0).unwrap();
        let features = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let data = Dataset::new(features, dvector![0.0, 0.0, 0.0, 0.0], "dup").unwrap();
        let k = gram_matrix(&spec, &data).unwrap();
        for v in k.iter() {
            assert!((v - 1.0).abs() < 1e-15);
        }
        // rank 1: second singular value vanishes
        let svd = k.svd(false, false);
        assert!(svd.singular_values[1].abs() < 1e-12);
    }

    #[test]
    fn gram_matches_pairwise_eval_and_is_psd() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 5;
        let features = DMatrix::from_fn(n, 3, |_, _| rng.gen_range(-2.0..2.0));
        let data = Dataset::new(features, DVector::zeros(n), "rand").unwrap();
        let spec = KernelSpec::gaussian(1.5).unwrap();
        let k = gram_matrix(&spec, &data).unwrap();
        for i in 0..n {
            for j in 0..n {
                let expected = eval_kernel(
                    &spec,
                    data.features.row(i).transpose().as_view(),
                    data.features.row(j).transpose().as_view(),
                )
                .unwrap();
                assert_eq!(k[(i, j)], expected);
                assert_eq!(k[(i, j)], k[(j, i)]);
            }
        }
        let eig = k.symmetric_eigen();
        assert!(eig.eigenvalues.min() >= -1e-10);
    }

    #[test]
    fn rank1_column_outer_product_is_psd() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let data = toy_dataset();
        let c = compute_column(&spec, &data, 0).unwrap();
        let outer = &c * c.transpose();
        let eig = outer.symmetric_eigen();
        let mut eigs: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(eigs[0] >= 0.0);
        for e in &eigs[1..] {
            assert!(e.abs() < 1e-12);
        }
    }

    #[test]
    fn empirical_kernel_map_identity() {
        // With all columns active at unit weight, sum_m c_m c_m^T = K K^T
        // for a kernel with unit diagonal.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 12;
        let features = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-3.0..3.0));
        let data = Dataset::new(features, DVector::zeros(n), "ekm").unwrap();
        let spec = KernelSpec::gaussian(0.8).unwrap();
        let k = gram_matrix(&spec, &data).unwrap();
        let mut sum = DMatrix::zeros(n, n);
        for m in 0..n {
            let c = compute_column(&spec, &data, m).unwrap();
            sum += &c * c.transpose();
        }
        let kkt = &k * k.transpose();
        assert!((&sum - &kkt).abs().max() < 1e-10);
    }

    #[test]
    fn dataset_rejects_mismatched_lengths() {
        let features = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(Dataset::new(features, dvector![1.0], "bad").is_err());
    }
}
