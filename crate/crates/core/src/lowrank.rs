//! Implicit maintenance of `(lambda I + K~(mu))^-1` through the low-rank
//! factorization
//!
//! ```text
//! (lambda I + C D C^T)^-1 = (1/lambda) I - (1/lambda^2) C G C^T,
//! G = (D^-1 + (1/lambda) C^T C)^-1,
//! ```
//!
//! where `C` stacks the normalized columns of the active (mu > 0) landmarks
//! and `D` holds their weights. A single-coordinate weight change maps to one
//! of four incremental updates of `G` (no-op, rank-1 correction, row/column
//! removal, bordered growth), each costing at most `O(n m0 + m0^2)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Pivots smaller than this trigger a from-scratch rebuild of `G` instead of
/// an incremental update.
const PIVOT_TOL: f64 = 1e-12;

/// Incremental updates between rebuilds; bounds floating-point drift.
const REBUILD_PERIOD: u64 = 1000;

/// Which of the four incremental update cases `update_weight` applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdateCase {
    /// mu stayed at zero.
    NoOp,
    /// mu changed between two nonzero values (rank-1 correction of G).
    Reweight,
    /// mu dropped to zero (row/column removal).
    Remove,
    /// mu left zero (bordered growth of G).
    Insert,
}

/// The `(C, D, G, lambda)` quadruple representing `(lambda I + K~(mu))^-1`.
#[derive(Debug, Clone)]
pub struct InverseState {
    lambda: f64,
    /// Active landmark indices (mu > 0), in insertion order.
    active: Vec<usize>,
    /// Normalized columns of the active landmarks; each has length n.
    columns: Vec<DVector<f64>>,
    /// Active weights (the diagonal of D).
    dvals: Vec<f64>,
    /// Symmetric m0 x m0 matrix G.
    g: DMatrix<f64>,
    updates_since_rebuild: u64,
}

impl InverseState {
    /// Empty-support state: the represented inverse is `(1/lambda) I`.
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        Ok(InverseState {
            lambda,
            active: Vec::new(),
            columns: Vec::new(),
            dvals: Vec::new(),
            g: DMatrix::zeros(0, 0),
            updates_since_rebuild: 0,
        })
    }

    /// Builds a state directly from a set of active weights and their columns.
    pub fn from_weights(
        lambda: f64,
        entries: impl IntoIterator<Item = (usize, f64, DVector<f64>)>,
    ) -> Result<Self> {
        let mut state = InverseState::new(lambda)?;
        for (idx, mu, col) in entries {
            if !(mu > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "weight for landmark {idx} must be positive, got {mu}"
                )));
            }
            state.active.push(idx);
            state.dvals.push(mu);
            state.columns.push(col);
        }
        state.rebuild()?;
        Ok(state)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Support size m0.
    pub fn support_size(&self) -> usize {
        self.active.len()
    }

    pub fn active_indices(&self) -> &[usize] {
        &self.active
    }

    pub fn weights(&self) -> &[f64] {
        &self.dvals
    }

    pub fn columns(&self) -> &[DVector<f64>] {
        &self.columns
    }

    pub fn g_matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// Sum of all weights (inactive entries are zero by construction).
    pub fn weight_sum(&self) -> f64 {
        self.dvals.iter().sum()
    }

    pub fn weight_of(&self, index: usize) -> f64 {
        match self.slot_of(index) {
            Some(j) => self.dvals[j],
            None => 0.0,
        }
    }

    fn slot_of(&self, index: usize) -> Option<usize> {
        self.active.iter().position(|&i| i == index)
    }

    /// `C^T v` as a dense length-m0 vector.
    fn ct_dot(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.columns.len(), self.columns.iter().map(|c| c.dot(v)))
    }

    /// Applies the represented inverse:
    /// `(lambda I + C D C^T)^-1 v = v/lambda - (1/lambda^2) C (G (C^T v))`.
    pub fn apply_inverse(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v / self.lambda;
        if self.active.is_empty() {
            return out;
        }
        let ctv = self.ct_dot(v);
        let gctv = &self.g * ctv;
        let scale = 1.0 / (self.lambda * self.lambda);
        for (col, w) in self.columns.iter().zip(gctv.iter()) {
            out.axpy(-scale * w, col, 1.0);
        }
        out
    }

    /// Recomputes `G = (D^-1 + (1/lambda) C^T C)^-1` by a dense SPD solve.
    pub fn rebuild(&mut self) -> Result<()> {
        let m0 = self.active.len();
        self.updates_since_rebuild = 0;
        if m0 == 0 {
            self.g = DMatrix::zeros(0, 0);
            return Ok(());
        }
        let mut ginv = DMatrix::zeros(m0, m0);
        for i in 0..m0 {
            for j in i..m0 {
                let v = self.columns[i].dot(&self.columns[j]) / self.lambda;
                ginv[(i, j)] = v;
                ginv[(j, i)] = v;
            }
            ginv[(i, i)] += 1.0 / self.dvals[i];
        }
        let chol = ginv
            .clone()
            .cholesky()
            .ok_or(Error::SingularMatrix { pivot: 0.0 })?;
        self.g = chol.inverse();
        Ok(())
    }

    fn maybe_refresh(&mut self) -> Result<()> {
        self.updates_since_rebuild += 1;
        if self.updates_since_rebuild >= REBUILD_PERIOD {
            self.rebuild()?;
        }
        Ok(())
    }

    /// Sets the weight of landmark `index` to `mu_new`, dispatching one of the
    /// four incremental cases. `column` is consulted only when a previously
    /// inactive landmark becomes active.
    pub fn update_weight(
        &mut self,
        index: usize,
        mu_new: f64,
        column: impl FnOnce() -> DVector<f64>,
    ) -> Result<UpdateCase> {
        if !(mu_new >= 0.0) || !mu_new.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "new weight must be nonnegative and finite, got {mu_new}"
            )));
        }
        match (self.slot_of(index), mu_new > 0.0) {
            (None, false) => Ok(UpdateCase::NoOp),
            (Some(slot), true) => {
                self.reweight(slot, mu_new)?;
                Ok(UpdateCase::Reweight)
            }
            (Some(slot), false) => {
                self.remove(slot)?;
                Ok(UpdateCase::Remove)
            }
            (None, true) => {
                self.insert(index, mu_new, column())?;
                Ok(UpdateCase::Insert)
            }
        }
    }

    /// Case 2: rank-1 correction
    /// `G <- G - (delta / (1 + delta g_pp)) g_p g_p^T`, delta = 1/mu_new - 1/mu_old.
    fn reweight(&mut self, slot: usize, mu_new: f64) -> Result<()> {
        let mu_old = self.dvals[slot];
        if mu_new == mu_old {
            return Ok(());
        }
        let delta = 1.0 / mu_new - 1.0 / mu_old;
        let gpp = self.g[(slot, slot)];
        let denom = 1.0 + delta * gpp;
        self.dvals[slot] = mu_new;
        if denom.abs() < PIVOT_TOL || !denom.is_finite() {
            return self.rebuild();
        }
        let gp = self.g.column(slot).clone_owned();
        let coeff = delta / denom;
        self.g.ger(-coeff, &gp, &gp, 1.0);
        self.maybe_refresh()
    }

    /// Case 3: deflate by the leaving column, then drop its row/column:
    /// `G <- (G - (1/g_pp) g_p g_p^T) with slot p removed`.
    fn remove(&mut self, slot: usize) -> Result<()> {
        let gpp = self.g[(slot, slot)];
        self.active.remove(slot);
        self.dvals.remove(slot);
        self.columns.remove(slot);
        if gpp.abs() < PIVOT_TOL || !gpp.is_finite() {
            return self.rebuild();
        }
        let gp = self.g.column(slot).clone_owned();
        self.g.ger(-1.0 / gpp, &gp, &gp, 1.0);
        self.g = self.g.clone().remove_row(slot).remove_column(slot);
        self.maybe_refresh()
    }

    /// Case 4: bordered growth with Schur complement
    /// `1/s = 1/mu_new + (1/lambda) c^T c - (1/lambda^2) c^T C G C^T c`.
    fn insert(&mut self, index: usize, mu_new: f64, column: DVector<f64>) -> Result<()> {
        let lambda = self.lambda;
        let w = self.ct_dot(&column); // C_old^T c_p
        let t = &self.g * &w; // G_old C_old^T c_p
        let s_inv = 1.0 / mu_new + column.dot(&column) / lambda - w.dot(&t) / (lambda * lambda);

        self.active.push(index);
        self.dvals.push(mu_new);
        self.columns.push(column);

        if s_inv.abs() < PIVOT_TOL || !s_inv.is_finite() {
            return self.rebuild();
        }
        let s = 1.0 / s_inv;
        let v = t * (-s / lambda);
        let m0 = self.g.nrows();
        let mut g_new = DMatrix::zeros(m0 + 1, m0 + 1);
        g_new.view_mut((0, 0), (m0, m0)).copy_from(&self.g);
        g_new.view_mut((0, 0), (m0, m0)).ger(1.0 / s, &v, &v, 1.0);
        for i in 0..m0 {
            g_new[(i, m0)] = v[i];
            g_new[(m0, i)] = v[i];
        }
        g_new[(m0, m0)] = s;
        self.g = g_new;
        self.maybe_refresh()
    }

    /// Dense `lambda I + C D C^T`, for oracles and baselines on small n.
    pub fn dense_regularized_gram(&self, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::identity(n, n) * self.lambda;
        for (col, mu) in self.columns.iter().zip(self.dvals.iter()) {
            m.ger(*mu, col, col, 1.0);
        }
        m
    }
}

/// `(A + U C V)^-1 = A^-1 - A^-1 U (C^-1 + V A^-1 U)^-1 V A^-1`.
pub fn woodbury_inverse(
    a_inv: &DMatrix<f64>,
    u: &DMatrix<f64>,
    c: &DMatrix<f64>,
    v: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let k = a_inv.nrows();
    let j = c.nrows();
    if a_inv.ncols() != k || c.ncols() != j || u.nrows() != k || u.ncols() != j || v.nrows() != j || v.ncols() != k
    {
        return Err(Error::DimensionMismatch(
            "woodbury_inverse operand shapes are inconsistent".into(),
        ));
    }
    let c_inv = c
        .clone()
        .try_inverse()
        .ok_or(Error::SingularMatrix { pivot: 0.0 })?;
    let inner = c_inv + v * a_inv * u;
    let inner_inv = inner
        .try_inverse()
        .ok_or(Error::SingularMatrix { pivot: 0.0 })?;
    Ok(a_inv - a_inv * u * inner_inv * v * a_inv)
}

/// Inverse of the symmetric bordered matrix `[[A, b], [b^T, c]]` given `A^-1`,
/// via the Schur complement `k = c - b^T A^-1 b`.
pub fn block_inverse_add(a_inv: &DMatrix<f64>, b: &DVector<f64>, c: f64) -> Result<DMatrix<f64>> {
    let k = a_inv.nrows();
    if a_inv.ncols() != k || b.len() != k {
        return Err(Error::DimensionMismatch(
            "block_inverse_add operand shapes are inconsistent".into(),
        ));
    }
    let u = a_inv * b;
    let schur = c - b.dot(&u);
    if schur.abs() < PIVOT_TOL {
        return Err(Error::SingularMatrix { pivot: schur });
    }
    let mut out = DMatrix::zeros(k + 1, k + 1);
    out.view_mut((0, 0), (k, k)).copy_from(a_inv);
    out.view_mut((0, 0), (k, k)).ger(1.0 / schur, &u, &u, 1.0);
    for i in 0..k {
        out[(i, k)] = -u[i] / schur;
        out[(k, i)] = -u[i] / schur;
    }
    out[(k, k)] = 1.0 / schur;
    Ok(out)
}
