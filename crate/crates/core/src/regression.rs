//! Prediction from a trained model, exact kernel ridge regression baselines
//! and mean-squared-error scoring.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::kernel::{compute_column, eval_kernel, gram_matrix, Dataset, KernelSpec};
use crate::lowrank::InverseState;

/// Largest n for which the dense baselines will materialize the Gram matrix.
pub const DENSE_BASELINE_CAP: usize = 20_000;

/// A trained low-rank model: the sparse weights, the dual vector and the
/// landmark expansion. Sufficient for prediction.
#[derive(Debug, Clone)]
pub struct ModelSolution {
    pub lambda: f64,
    pub spec: KernelSpec,
    /// Training-set indices of the landmarks with mu > 0.
    pub support_indices: Vec<usize>,
    /// Feature vectors of the support landmarks.
    pub landmarks: Vec<DVector<f64>>,
    /// Positive weights of the support landmarks.
    pub mu_star: Vec<f64>,
    /// Length-n dual vector alpha* = 2 (I + K~(mu*)/lambda)^-1 y.
    pub alpha_star: DVector<f64>,
    /// Collapsed landmark weights alpha~_m = mu_m (c_m^T alpha*) / sqrt(k(x_m, x_m)).
    pub alpha_tilde: Vec<f64>,
}

impl ModelSolution {
    /// Support size m0.
    pub fn support_size(&self) -> usize {
        self.support_indices.len()
    }

    /// `f(x) = (1/2 lambda) sum_m alpha~_m k(x_m, x)`.
    pub fn predict(&self, x: DVectorView<f64>) -> Result<f64> {
        let mut acc = 0.0;
        for (landmark, &at) in self.landmarks.iter().zip(&self.alpha_tilde) {
            acc += at * eval_kernel(&self.spec, landmark.as_view(), x)?;
        }
        Ok(acc / (2.0 * self.lambda))
    }

    pub fn predict_all(&self, features: &DMatrix<f64>) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(features.nrows());
        for i in 0..features.nrows() {
            out[i] = self.predict(features.row(i).transpose().as_view())?;
        }
        Ok(out)
    }
}

/// Exact kernel ridge regression model over its own training points.
#[derive(Debug, Clone)]
pub struct KrrModel {
    pub lambda: f64,
    pub spec: KernelSpec,
    pub train: Arc<Dataset>,
    /// Dual vector solving `(I + K/lambda) alpha = 2 y`.
    pub alpha: DVector<f64>,
    /// Attained dual objective `y^T (I + K/lambda)^-1 y`.
    pub dual_objective: f64,
}

impl KrrModel {
    /// `f(x) = (1/2 lambda) sum_i alpha_i k(x_i, x)`.
    pub fn predict(&self, x: DVectorView<f64>) -> Result<f64> {
        let mut acc = 0.0;
        for i in 0..self.train.n() {
            let xi = self.train.features.row(i).transpose();
            acc += self.alpha[i] * eval_kernel(&self.spec, xi.as_view(), x)?;
        }
        Ok(acc / (2.0 * self.lambda))
    }

    pub fn predict_all(&self, features: &DMatrix<f64>) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(features.nrows());
        for i in 0..features.nrows() {
            out[i] = self.predict(features.row(i).transpose().as_view())?;
        }
        Ok(out)
    }
}

/// Exact KRR on all n training points (the KRRn baseline).
pub fn krr_full(spec: &KernelSpec, data: &Arc<Dataset>, lambda: f64) -> Result<KrrModel> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    let n = data.n();
    if n > DENSE_BASELINE_CAP {
        return Err(Error::InvalidParameter(format!(
            "dense KRR refused for n = {n} > {DENSE_BASELINE_CAP}"
        )));
    }
    let mut system = gram_matrix(spec, data)?;
    system.unscale_mut(lambda); // K / lambda
    for i in 0..n {
        system[(i, i)] += 1.0;
    }
    let chol = system
        .cholesky()
        .ok_or(Error::SingularMatrix { pivot: 0.0 })?;
    let alpha = chol.solve(&(&data.targets * 2.0));
    let dual_objective = data.targets.dot(&alpha) / 2.0;
    Ok(KrrModel {
        lambda,
        spec: *spec,
        train: Arc::clone(data),
        alpha,
        dual_objective,
    })
}

/// Exact KRR restricted to a subset of the training points (the KRRM
/// baseline).
pub fn krr_subset(
    spec: &KernelSpec,
    data: &Dataset,
    subset: &[usize],
    lambda: f64,
) -> Result<KrrModel> {
    if subset.is_empty() {
        return Err(Error::InvalidParameter("subset must be non-empty".into()));
    }
    let d = data.dim();
    let mut features = DMatrix::zeros(subset.len(), d);
    let mut targets = DVector::zeros(subset.len());
    for (row, &i) in subset.iter().enumerate() {
        if i >= data.n() {
            return Err(Error::InvalidParameter(format!(
                "subset index {i} out of range for n = {}",
                data.n()
            )));
        }
        features.row_mut(row).copy_from(&data.features.row(i));
        targets[row] = data.targets[i];
    }
    let restricted = Arc::new(Dataset::new(features, targets, format!("{}[subset]", data.name))?);
    krr_full(spec, &restricted, lambda)
}

/// Uniform-weight baseline: mu_m = 1 on every candidate column, solved in
/// closed form through the low-rank inverse.
pub fn unif_baseline(
    spec: &KernelSpec,
    data: &Dataset,
    candidates: &[usize],
    lambda: f64,
) -> Result<ModelSolution> {
    let mut entries = Vec::with_capacity(candidates.len());
    for &m in candidates {
        entries.push((m, 1.0, compute_column(spec, data, m)?));
    }
    let state = InverseState::from_weights(lambda, entries)?;
    let alpha_star = state.apply_inverse(&data.targets) * (2.0 * lambda);
    let mut support_indices = Vec::with_capacity(candidates.len());
    let mut landmarks = Vec::with_capacity(candidates.len());
    let mut mu_star = Vec::with_capacity(candidates.len());
    let mut alpha_tilde = Vec::with_capacity(candidates.len());
    for (&global, column) in state.active_indices().iter().zip(state.columns()) {
        let x_m = data.features.row(global).transpose();
        let diag = eval_kernel(spec, x_m.as_view(), x_m.as_view())?;
        support_indices.push(global);
        mu_star.push(1.0);
        alpha_tilde.push(column.dot(&alpha_star) / diag.sqrt());
        landmarks.push(x_m);
    }
    Ok(ModelSolution {
        lambda,
        spec: *spec,
        support_indices,
        landmarks,
        mu_star,
        alpha_star,
        alpha_tilde,
    })
}

/// Mean of squared differences.
pub fn mse(predictions: &DVector<f64>, targets: &DVector<f64>) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let n = predictions.len() as f64;
    Ok((predictions - targets).norm_squared() / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(seed: u64, n: usize, d: usize) -> Arc<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = DMatrix::from_fn(n, d, |_, _| rng.gen_range(-3.0..3.0));
        let targets = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        Arc::new(Dataset::new(features, targets, "rand").unwrap())
    }

    #[test]
    fn mse_basics() {
        let a = dvector![1.0, 2.0];
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let preds = dvector![0.0, 0.0];
        let targets = dvector![1.0, -1.0];
        assert_eq!(mse(&preds, &targets).unwrap(), 1.0);
        assert!(mse(&preds, &dvector![1.0]).is_err());
    }

    #[test]
    fn mse_matches_two_pass_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let preds = DVector::from_fn(17, |_, _| rng.gen_range(-2.0..2.0));
        let targets = DVector::from_fn(17, |_, _| rng.gen_range(-2.0..2.0));
        let mut acc = 0.0;
        for i in 0..17 {
            let d: f64 = preds[i] - targets[i];
            acc += d * d;
        }
        let reference = acc / 17.0;
        assert!((mse(&preds, &targets).unwrap() - reference).abs() < 1e-15);
    }

    #[test]
    fn predict_empty_support_is_zero() {
        let model = ModelSolution {
            lambda: 1.0,
            spec: KernelSpec::gaussian(1.0).unwrap(),
            support_indices: vec![],
            landmarks: vec![],
            mu_star: vec![],
            alpha_star: DVector::zeros(3),
            alpha_tilde: vec![],
        };
        assert_eq!(model.predict(dvector![1.0, 2.0].as_view()).unwrap(), 0.0);
    }

    #[test]
    fn predict_single_landmark_at_itself() {
        let lambda = 0.7;
        let model = ModelSolution {
            lambda,
            spec: KernelSpec::gaussian(1.0).unwrap(),
            support_indices: vec![0],
            landmarks: vec![dvector![1.0, -1.0]],
            mu_star: vec![1.0],
            alpha_star: DVector::zeros(1),
            alpha_tilde: vec![2.0 * lambda],
        };
        let v = model.predict(dvector![1.0, -1.0].as_view()).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn krr_two_point_analytic() {
        // k(x1,x2) = e^{-1/2} =: r with sigma2 = 1, distance 1
        let features = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let data = Arc::new(Dataset::new(features, dvector![1.0, -1.0], "two").unwrap());
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let lambda = 1.0;
        let model = krr_full(&spec, &data, lambda).unwrap();
        let r = (-0.5f64).exp();
        // (I + K) alpha = 2y with K = [[1, r], [r, 1]]
        let m = DMatrix::from_row_slice(2, 2, &[2.0, r, r, 2.0]);
        let expected = m.try_inverse().unwrap() * dvector![2.0, -2.0];
        assert!((model.alpha.clone() - expected).norm() < 1e-12);
    }

    #[test]
    fn krr_residual_is_small() {
        let data = random_dataset(3, 50, 2);
        let spec = KernelSpec::gaussian(1.2).unwrap();
        let lambda = 0.8;
        let model = krr_full(&spec, &data, lambda).unwrap();
        let k = gram_matrix(&spec, &data).unwrap();
        let system = DMatrix::identity(50, 50) + k / lambda;
        let residual = &system * &model.alpha - &data.targets * 2.0;
        assert!(residual.norm() < 1e-8);
        // attained dual objective equals y^T (I + K/lambda)^-1 y
        let direct = data.targets.dot(&(system.try_inverse().unwrap() * &data.targets));
        assert!((model.dual_objective - direct).abs() < 1e-8);
    }

    #[test]
    fn krr_attains_dual_optimum() {
        // F_KRR(alpha) = y^T a - (1/4 lambda) a^T (lambda I + K) a is maximal
        // at the returned alpha.
        let data = random_dataset(5, 12, 2);
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let lambda = 1.3;
        let model = krr_full(&spec, &data, lambda).unwrap();
        let k = gram_matrix(&spec, &data).unwrap();
        let reg = DMatrix::identity(12, 12) * lambda + &k;
        let dual = |a: &DVector<f64>| data.targets.dot(a) - a.dot(&(&reg * a)) / (4.0 * lambda);
        let f_star = dual(&model.alpha);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let perturbed = &model.alpha
                + DVector::from_fn(12, |_, _| rng.gen_range(-0.1..0.1));
            assert!(dual(&perturbed) <= f_star + 1e-12);
        }
    }

    #[test]
    fn krr_subset_of_everything_matches_full() {
        let data = random_dataset(7, 15, 2);
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let subset: Vec<usize> = (0..15).collect();
        let full = krr_full(&spec, &data, 1.0).unwrap();
        let sub = krr_subset(&spec, &data, &subset, 1.0).unwrap();
        assert!((full.alpha.clone() - sub.alpha.clone()).norm() < 1e-12);
    }

    #[test]
    fn krr_single_point_closed_form() {
        let data = random_dataset(9, 5, 1);
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let model = krr_subset(&spec, &data, &[2], 2.0).unwrap();
        // (1 + 1/lambda) alpha = 2y  =>  alpha = 2y / (1 + 1/lambda)
        let expected = 2.0 * data.targets[2] / (1.0 + 0.5);
        assert!((model.alpha[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn unif_matches_dense_solve() {
        let data = random_dataset(11, 10, 2);
        let spec = KernelSpec::gaussian(0.9).unwrap();
        let lambda = 1.1;
        let candidates: Vec<usize> = vec![0, 3, 5, 7];
        let model = unif_baseline(&spec, &data, &candidates, lambda).unwrap();
        // dense route: alpha = 2 (I + K~(1)/lambda)^-1 y
        let n = data.n();
        let mut ktilde = DMatrix::zeros(n, n);
        for &m in &candidates {
            let c = compute_column(&spec, &data, m).unwrap();
            ktilde += &c * c.transpose();
        }
        let system = DMatrix::identity(n, n) + ktilde / lambda;
        let expected = system.try_inverse().unwrap() * &data.targets * 2.0;
        assert!((model.alpha_star.clone() - expected).norm() < 1e-9);
    }

    #[test]
    fn model_prediction_matches_dense_kernel_expansion() {
        // predict via alpha~ equals the expansion via alpha* and the dense
        // parameterized kernel k~_mu.
        let data = random_dataset(13, 10, 2);
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let candidates: Vec<usize> = vec![1, 4, 8];
        let model = unif_baseline(&spec, &data, &candidates, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            let via_tilde = model.predict(x.as_view()).unwrap();
            // k~_mu(x_i, x) = sum_m mu_m k(x_i,x_m) k(x,x_m) / k(x_m,x_m)
            let mut via_alpha = 0.0;
            for i in 0..data.n() {
                let xi = data.features.row(i).transpose();
                let mut ktilde = 0.0;
                for &m in &candidates {
                    let xm = data.features.row(m).transpose();
                    let kim = eval_kernel(&spec, xi.as_view(), xm.as_view()).unwrap();
                    let kxm = eval_kernel(&spec, x.as_view(), xm.as_view()).unwrap();
                    let kmm = eval_kernel(&spec, xm.as_view(), xm.as_view()).unwrap();
                    ktilde += kim * kxm / kmm;
                }
                via_alpha += model.alpha_star[i] * ktilde;
            }
            via_alpha /= 2.0;
            assert!((via_tilde - via_alpha).abs() < 1e-8, "{via_tilde} vs {via_alpha}");
        }
    }
}
