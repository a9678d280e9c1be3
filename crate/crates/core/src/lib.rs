//! Adaptive Cholesky Gaussian process regression.
//!
//! The kernel matrix of a GP is factorized block by block. Between the
//! downdate of a block and its factorization, the intermediate state already
//! contains posterior variances, posterior covariances and prediction errors
//! of the next points conditioned on everything processed so far. From those
//! the [`bounds`] module estimates upper and lower bounds on the
//! log-determinant and on the quadratic form of the full dataset, and the
//! [`acgp`] driver stops as soon as the bounds pin the log-marginal likelihood
//! down to a requested relative error.
//!
//! * [`kernel`]: covariance functions, mean and noise models.
//! * [`linalg`]: dense row-major storage and blocked in-place primitives.
//! * [`bounds`]: bound estimators, stopping rule and estimators.
//! * [`acgp`]: the early-stopping decomposition, prediction and LML curves.
//! * [`exact`]: dense exact GP used as an independent reference.
//! * [`hyperopt`]: hyperparameter tuning on the (estimated) negative LML.

pub mod acgp;
pub mod bounds;
pub mod error;
pub mod exact;
pub mod hyperopt;
pub mod kernel;
pub mod linalg;

pub use crate::acgp::{acgp_run, lml_curve, predict, AcgpResult, BlockTrace, StopConfig};
pub use crate::bounds::{
    check_stop, evaluate_bounds, extrapolation_estimator, lml_scale, midpoint_estimator, AlphaMode,
    BlockSnapshot, BoundsOptions, BoundsReport, CorrelationMode, EstimatorMode, QuadStats,
    UpperQuadMode,
};
pub use crate::error::{AcgpError, Result};
pub use crate::exact::ExactModel;
pub use crate::kernel::{Kernel, KernelFamily, KernelSpec, MeanModel, NoiseModel};
pub use crate::linalg::{FactorBuffer, MatMut, MatRef, Matrix};
