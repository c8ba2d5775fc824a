//! Knockoff-filter variable selection with false discovery rate control.
//!
//! The pipeline draws second-order Gaussian model-X knockoffs, fits a Lasso
//! on the augmented design, turns coefficient differences into knockoff
//! statistics and intermediate p-values, and selects features either with
//! the vanilla knockoff threshold or by aggregating several knockoff draws
//! (quantile aggregation followed by a BH or BY step-up).
//!
//! All numerical routines are generic over [`Scalar`] (`f32`/`f64`); the
//! aliases below fix the double-precision types used by the simulation
//! harness and the command-line tool.

pub mod aggregation;
pub mod error;
pub mod inference;
pub mod knockoff;
pub mod lasso;
pub mod numerics;
pub mod scalar;
pub mod simulation;

pub use aggregation::{
    aggregate_runs, bh_select, by_select, quantile_aggregate, run_ako, run_bootstraps, run_ko,
    AkoConfig, FdrMethod, LambdaPolicy, StepUp,
};
pub use error::{Error, Result};
pub use inference::{
    intermediate_pvalues, kappa, knockoff_threshold, lcd_statistic, vanilla_select,
};
pub use knockoff::{equicorrelated_s, estimate_gaussian, sample_knockoffs, Shrinkage};
pub use lasso::{lambda_max, lasso_cd, select_lambda_cv, CvOptions};
pub use numerics::{derive_stream, toeplitz_covariance, RngStream};
pub use scalar::Scalar;

pub type Matrix = ndarray::Array2<f64>;
pub type Vector = ndarray::Array1<f64>;
pub type Covariance = numerics::Covariance<f64>;
pub type CholeskyFactor = numerics::CholeskyFactor<f64>;
pub type GaussianModel = knockoff::GaussianModel<f64>;
pub type KnockoffCopy = knockoff::KnockoffCopy<f64>;
pub type LassoFit = lasso::LassoFit<f64>;
pub type KnockoffStats = inference::KnockoffStats<f64>;
pub type IntermediatePValues = inference::IntermediatePValues<f64>;
pub type KnockoffRun = aggregation::KnockoffRun<f64>;
pub type AggregationResult = aggregation::AggregationResult<f64>;
pub type KoResult = aggregation::KoResult<f64>;
