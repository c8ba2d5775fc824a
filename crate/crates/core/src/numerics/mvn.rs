use ndarray::{Array1, Array2};

use super::linalg::CholeskyFactor;
use super::rng::RngStream;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Draws `n` i.i.d. rows from `N(mean, L Lᵀ)`.
///
/// Standard normals are consumed row by row, so the output depends only on
/// the inputs and the stream state.
pub fn sample_mvn<T: Scalar>(
    mean: &Array1<T>,
    chol: &CholeskyFactor<T>,
    n: usize,
    rng: &mut RngStream,
) -> Result<Array2<T>> {
    let p = chol.dim();
    if mean.len() != p {
        return Err(Error::Shape(format!(
            "mean has length {} but the factor is {p}x{p}",
            mean.len()
        )));
    }
    let z = standard_normal_matrix(n, p, rng);
    let mut x = z.dot(&chol.lower().t());
    x += mean;
    Ok(x)
}

/// `n × p` matrix of independent standard normals, filled in row-major order.
pub fn standard_normal_matrix<T: Scalar>(n: usize, p: usize, rng: &mut RngStream) -> Array2<T> {
    let data: Vec<T> = (0..n * p).map(|_| rng.standard_normal()).collect();
    Array2::from_shape_vec((n, p), data).expect("n*p buffer")
}
