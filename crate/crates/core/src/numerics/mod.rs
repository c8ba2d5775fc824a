//! Dense numerics shared by every stage of the pipeline.

pub mod linalg;
pub mod mvn;
pub mod rng;

pub use linalg::{
    cholesky, cholesky_matrix, cholesky_semidefinite, frobenius_relative_error,
    symmetric_eigenvalues, toeplitz_covariance, CholeskyFactor, Covariance,
};
pub use mvn::{sample_mvn, standard_normal_matrix};
pub use rng::{derive_stream, mix_seed, RngStream};
