//! The regularized objective
//!
//! ```text
//! F(mu) = y^T (I + (1/lambda) K~(mu))^-1 y + nu * sum_m mu_m
//! ```
//!
//! and its coordinate-wise partial derivatives of all orders. Every quantity
//! reduces to the two inner products `a = y^T (lambda I + K~)^-1 c_m` and
//! `b = c_m^T (lambda I + K~)^-1 c_m`, which are computed once per coordinate
//! and shared between the gradient and the Hessian.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::lowrank::InverseState;

#[derive(Debug, Clone, Copy)]
pub struct ObjectiveParams {
    /// 1-norm penalty weight.
    pub nu: f64,
    /// Ridge parameter; must match the state's lambda.
    pub lambda: f64,
}

impl ObjectiveParams {
    pub fn new(nu: f64, lambda: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::InvalidParameter(format!("nu must be positive, got {nu}")));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        Ok(ObjectiveParams { nu, lambda })
    }
}

/// The shared inner products behind all partial derivatives at one coordinate.
#[derive(Debug, Clone, Copy)]
pub struct CoordInner {
    /// `y^T (lambda I + K~)^-1 c_m`
    pub y_inv_c: f64,
    /// `c_m^T (lambda I + K~)^-1 c_m`
    pub c_inv_c: f64,
}

/// One `apply_inverse` pass yields both inner products.
pub fn coord_inner(state: &InverseState, y: &DVector<f64>, c_m: &DVector<f64>) -> CoordInner {
    let z = state.apply_inverse(c_m);
    CoordInner {
        y_inv_c: y.dot(&z),
        c_inv_c: c_m.dot(&z),
    }
}

/// `F(mu) = lambda * y^T (lambda I + K~)^-1 y + nu * sum_m mu_m`.
pub fn objective_value(
    state: &InverseState,
    y: &DVector<f64>,
    mu_sum: f64,
    params: &ObjectiveParams,
) -> f64 {
    params.lambda * y.dot(&state.apply_inverse(y)) + params.nu * mu_sum
}

/// Exact change of `F` when one coordinate moves by `t` (a rank-1 weight
/// perturbation), via the Sherman-Morrison identity:
/// `F(mu + t e_m) - F(mu) = nu t - lambda t a^2 / (1 + t b)`.
/// Returns +inf when the perturbed matrix leaves the positive-definite range.
pub fn coordinate_objective_change(t: f64, inner: &CoordInner, params: &ObjectiveParams) -> f64 {
    let denom = 1.0 + t * inner.c_inv_c;
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    params.nu * t - params.lambda * t * inner.y_inv_c * inner.y_inv_c / denom
}

/// Exact minimizer over `v >= 0` of the one-coordinate restriction of `F`
/// at current value `mu_m`: stationary where `(1 + t b)^2 = lambda a^2 / nu`.
pub fn exact_coordinate_min(mu_m: f64, inner: &CoordInner, params: &ObjectiveParams) -> f64 {
    if inner.c_inv_c <= 0.0 {
        // zero column: only the penalty remains
        return 0.0;
    }
    let s = inner.y_inv_c.abs() * (params.lambda / params.nu).sqrt();
    (mu_m + (s - 1.0) / inner.c_inv_c).max(0.0)
}

pub fn grad_coord_from_inner(inner: &CoordInner, params: &ObjectiveParams) -> f64 {
    -params.lambda * inner.y_inv_c * inner.y_inv_c + params.nu
}

pub fn hess_coord_from_inner(inner: &CoordInner, params: &ObjectiveParams) -> f64 {
    2.0 * params.lambda * inner.y_inv_c * inner.y_inv_c * inner.c_inv_c
}

/// `dF/dmu_m = -lambda (y^T K~^-1 c_m)^2 + nu`; never exceeds nu.
pub fn grad_coord(
    state: &InverseState,
    y: &DVector<f64>,
    c_m: &DVector<f64>,
    params: &ObjectiveParams,
) -> f64 {
    grad_coord_from_inner(&coord_inner(state, y, c_m), params)
}

/// `d2F/dmu_m^2 = 2 lambda (y^T K~^-1 c_m)^2 (c_m^T K~^-1 c_m)`; nonnegative.
pub fn hess_coord(
    state: &InverseState,
    y: &DVector<f64>,
    c_m: &DVector<f64>,
    params: &ObjectiveParams,
) -> f64 {
    hess_coord_from_inner(&coord_inner(state, y, c_m), params)
}

/// `d^p F/dmu_m^p = (-1)^p p! lambda (y^T K~^-1 c_m)^2 (c_m^T K~^-1 c_m)^(p-1)`
/// for p >= 2.
pub fn higher_partial(
    state: &InverseState,
    y: &DVector<f64>,
    c_m: &DVector<f64>,
    p: u32,
    params: &ObjectiveParams,
) -> Result<f64> {
    if p < 2 {
        return Err(Error::InvalidParameter(format!(
            "higher_partial requires p >= 2, got {p}"
        )));
    }
    let inner = coord_inner(state, y, c_m);
    let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
    let factorial: f64 = (2..=p).fold(1.0_f64, |acc, k| acc * k as f64);
    Ok(sign
        * factorial
        * params.lambda
        * inner.y_inv_c
        * inner.y_inv_c
        * inner.c_inv_c.powi(p as i32 - 1))
}
