//! Kernel regression with learned conical combinations of rank-1 Nystrom
//! approximations.
//!
//! Instead of the full n x n Gram matrix, the learner works with a weighted
//! sum of rank-1 column outer products `K~(mu) = sum_m mu_m c_m c_m^T` and
//! minimizes
//!
//! ```text
//! F(mu) = y^T (I + (1/lambda) K~(mu))^-1 y + nu * sum_m mu_m,   mu >= 0,
//! ```
//!
//! jointly picking the kernel combination and the regression function. The
//! solver is a stochastic coordinate Newton descent whose per-iteration cost
//! is O(n m0), with the inverse maintained incrementally through the Woodbury
//! identity. Exact kernel ridge regression baselines and dataset utilities
//! round out the toolkit.

pub mod datasets;
pub mod error;
pub mod kernel;
pub mod lowrank;
pub mod objective;
pub mod optimizer;
pub mod regression;

pub use error::{Error, Result};
pub use kernel::{compute_column, eval_kernel, gram_matrix, Dataset, KernelSpec};
pub use lowrank::{block_inverse_add, woodbury_inverse, InverseState, UpdateCase};
pub use objective::{
    grad_coord, hess_coord, higher_partial, objective_value, ObjectiveParams,
};
pub use optimizer::{
    newton_coordinate_step, sample_candidate_set, train_slkl, ColumnMode, ColumnSource,
    NewtonDenominator, SlklTrainer, StopReason, TrainConfig, TrainTrace, WeightVector,
};
pub use regression::{krr_full, krr_subset, mse, unif_baseline, KrrModel, ModelSolution};
