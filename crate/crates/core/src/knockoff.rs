//! Second-order Gaussian model-X knockoffs.
//!
//! Given `X ~ N(μ, Σ)` and a diagonal `D = diag(s)` such that
//! `G = [[Σ, Σ − D], [Σ − D, Σ]]` is PSD, a knockoff copy is drawn from
//!
//! ```text
//! X̃ | X = x  ~  N( x − (x − μ) Σ⁻¹ D ,  2D − D Σ⁻¹ D )
//! ```
//!
//! The diagonal uses the equicorrelated construction on the correlation
//! scale, `s_j = min(2 λ_min(C), 1)`, shrunk by a `1 − 1e-8` slack so that the
//! conditional covariance stays strictly inside the PSD cone.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::numerics::{
    cholesky, cholesky_semidefinite, CholeskyFactor, Covariance, RngStream,
};
use crate::numerics::mvn::standard_normal_matrix;
use crate::scalar::Scalar;

/// Multiplicative slack applied to the equicorrelated diagonal.
pub const S_SLACK: f64 = 1e-8;

/// Covariance shrinkage used when fitting a Gaussian model to data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shrinkage {
    /// Fixed weight `η ∈ [0, 1]` on the diagonal target.
    Fixed(f64),
    /// Closed-form Ledoit-Wolf weight for a diagonal target.
    Auto,
}

/// Gaussian design model together with its precomputed knockoff sampler.
#[derive(Debug, Clone)]
pub struct GaussianModel<T> {
    mean: Array1<T>,
    sigma: Covariance<T>,
    s: Array1<T>,
    /// `Σ⁻¹ D`
    sigma_inv_d: Array2<T>,
    conditional_chol: CholeskyFactor<T>,
    shrinkage: Option<T>,
}

/// One knockoff draw.
#[derive(Debug, Clone, PartialEq)]
pub struct KnockoffCopy<T> {
    pub x_tilde: Array2<T>,
    pub bootstrap_id: u64,
}

impl<T: Scalar> GaussianModel<T> {
    /// Model with a known distribution; `s` is the equicorrelated diagonal
    /// computed on the correlation scale and mapped back to `Σ`'s scale.
    pub fn oracle(mean: Array1<T>, sigma: Covariance<T>) -> Result<Self> {
        let sd = sigma.diagonal().mapv(|v| v.sqrt());
        let corr = correlation_from(&sigma, &sd);
        let s_corr = equicorrelated_s(&corr)?;
        let s = &s_corr * &sd.mapv(|v| v * v);
        Self::with_s(mean, sigma, s)
    }

    /// Model with an explicit knockoff diagonal `s`.
    pub fn with_s(mean: Array1<T>, sigma: Covariance<T>, s: Array1<T>) -> Result<Self> {
        let p = sigma.dim();
        if mean.len() != p || s.len() != p {
            return Err(Error::Shape(format!(
                "mean ({}) and s ({}) must match covariance dimension {p}",
                mean.len(),
                s.len()
            )));
        }
        if s.iter().any(|v| !(*v >= T::zero())) {
            return Err(Error::Domain("knockoff diagonal s must be nonnegative".into()));
        }
        let chol = cholesky(&sigma)?;
        let mut sigma_inv_d = chol.solve(&Array2::eye(p));
        for (j, mut col) in sigma_inv_d.axis_iter_mut(Axis(1)).enumerate() {
            col *= s[j];
        }
        // 2D − D Σ⁻¹ D
        let mut cond = Array2::<T>::zeros((p, p));
        for i in 0..p {
            for j in 0..p {
                cond[[i, j]] = -s[i] * sigma_inv_d[[i, j]];
            }
            cond[[i, i]] = cond[[i, i]] + T::lit(2.0) * s[i];
        }
        let cond = (&cond + &cond.t()) * T::lit(0.5);
        let conditional_chol = cholesky_semidefinite(cond.view(), T::lit(1e-12)).map_err(|e| {
            Error::Construction(format!("knockoff conditional covariance: {e}"))
        })?;
        Ok(Self {
            mean,
            sigma,
            s,
            sigma_inv_d,
            conditional_chol,
            shrinkage: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Array1<T> {
        &self.mean
    }

    pub fn sigma(&self) -> &Covariance<T> {
        &self.sigma
    }

    pub fn s(&self) -> &Array1<T> {
        &self.s
    }

    pub fn conditional_chol(&self) -> &CholeskyFactor<T> {
        &self.conditional_chol
    }

    /// Shrinkage weight used when the model was estimated from data.
    pub fn shrinkage(&self) -> Option<T> {
        self.shrinkage
    }

    /// Joint covariance `G` of `(X, X̃)`.
    pub fn joint_covariance(&self) -> Array2<T> {
        let p = self.dim();
        let sig = self.sigma.matrix();
        let mut g = Array2::<T>::zeros((2 * p, 2 * p));
        for i in 0..p {
            for j in 0..p {
                let off = if i == j { sig[[i, j]] - self.s[i] } else { sig[[i, j]] };
                g[[i, j]] = sig[[i, j]];
                g[[i + p, j + p]] = sig[[i, j]];
                g[[i, j + p]] = off;
                g[[i + p, j]] = off;
            }
        }
        g
    }
}

fn correlation_from<T: Scalar>(sigma: &Covariance<T>, sd: &Array1<T>) -> Covariance<T> {
    let m = sigma.matrix();
    let p = m.nrows();
    let corr = Array2::from_shape_fn((p, p), |(i, j)| {
        if i == j {
            T::one()
        } else {
            m[[i, j]] / (sd[i] * sd[j])
        }
    });
    Covariance::new_unchecked(corr)
}

/// Equicorrelated knockoff diagonal for a unit-diagonal covariance.
pub fn equicorrelated_s<T: Scalar>(sigma_corr: &Covariance<T>) -> Result<Array1<T>> {
    let p = sigma_corr.dim();
    let diag_tol = T::lit(1e-8);
    if sigma_corr
        .matrix()
        .diag()
        .iter()
        .any(|d| (*d - T::one()).abs() > diag_tol)
    {
        return Err(Error::Domain(
            "equicorrelated construction needs a unit-diagonal matrix".into(),
        ));
    }
    let eig = sigma_corr.eigenvalues();
    let lambda_min = eig[0];
    if !(lambda_min > T::lit(1e-10) * eig[p - 1].max(T::one())) {
        return Err(Error::Domain(format!(
            "correlation matrix is not positive definite (smallest eigenvalue {lambda_min})"
        )));
    }
    let value = (T::lit(2.0) * lambda_min).min(T::one()) * (T::one() - T::lit(S_SLACK));
    Ok(Array1::from_elem(p, value))
}

/// Fits `N(μ̂, Σ̂)` to the rows of `x`, with `Σ̂` shrunk towards its diagonal.
///
/// Columns are standardized first; shrinkage and the equicorrelated
/// diagonal are computed on the correlation scale and mapped back.
pub fn estimate_gaussian<T: Scalar>(x: &Array2<T>, shrinkage: Shrinkage) -> Result<GaussianModel<T>> {
    let (n, p) = x.dim();
    if n < 2 || p == 0 {
        return Err(Error::Shape(format!(
            "need at least 2 rows and 1 column to estimate a model, got {n}x{p}"
        )));
    }
    if let Shrinkage::Fixed(eta) = shrinkage {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Config(format!("shrinkage must lie in [0, 1], got {eta}")));
        }
    }
    let nf = T::count(n);
    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let mut z = x - &mean;
    let mut sd = Array1::<T>::zeros(p);
    for (j, mut col) in z.axis_iter_mut(Axis(1)).enumerate() {
        let var = col.iter().map(|v| *v * *v).sum::<T>() / nf;
        let scale = x.column(j).iter().fold(T::zero(), |m, v| m.max(v.abs()));
        // rounding residue of a constant column sits far below this
        if !(var > T::zero()) || var.sqrt() <= T::lit(1e-12) * scale {
            return Err(Error::DegenerateFeature { column: j });
        }
        sd[j] = var.sqrt();
        col /= sd[j];
    }
    let mut corr = z.t().dot(&z) / nf;
    for j in 0..p {
        corr[[j, j]] = T::one();
    }
    let eta = match shrinkage {
        Shrinkage::Fixed(eta) => T::lit(eta),
        Shrinkage::Auto => ledoit_wolf_diagonal_weight(&z, &corr),
    };
    let mut shrunk = corr.mapv(|v| v * (T::one() - eta));
    for j in 0..p {
        shrunk[[j, j]] = T::one();
    }
    let shrunk_corr = Covariance::new_unchecked(shrunk);
    let s_corr = equicorrelated_s(&shrunk_corr)?;
    let sigma = Array2::from_shape_fn((p, p), |(i, j)| {
        shrunk_corr.matrix()[[i, j]] * sd[i] * sd[j]
    });
    let s = &s_corr * &sd.mapv(|v| v * v);
    let mut model = GaussianModel::with_s(mean, Covariance::new_unchecked(sigma), s)?;
    model.shrinkage = Some(eta);
    Ok(model)
}

/// Optimal convex weight on the diagonal target for standardized data `z`
/// with sample correlation `corr`: `min(1, b² / d²)` where `d²` is the
/// squared off-diagonal mass of `corr` and `b²` the estimated variance of
/// that mass.
fn ledoit_wolf_diagonal_weight<T: Scalar>(z: &Array2<T>, corr: &Array2<T>) -> T {
    let n = T::count(z.nrows());
    let p = corr.nrows();
    let z2 = z.mapv(|v| v * v);
    let fourth = z2.t().dot(&z2);
    let (mut d2, mut sum_fourth) = (T::zero(), T::zero());
    for i in 0..p {
        for j in 0..p {
            if i != j {
                d2 = d2 + corr[[i, j]] * corr[[i, j]];
                sum_fourth = sum_fourth + fourth[[i, j]];
            }
        }
    }
    if d2 == T::zero() {
        return T::zero();
    }
    let b2 = ((sum_fourth - n * d2) / (n * n)).max(T::zero());
    (b2 / d2).min(T::one())
}

/// Draws a knockoff copy of `x` from the model's conditional distribution.
pub fn sample_knockoffs<T: Scalar>(
    x: &Array2<T>,
    model: &GaussianModel<T>,
    rng: &mut RngStream,
) -> Result<KnockoffCopy<T>> {
    let (n, p) = x.dim();
    if p != model.dim() {
        return Err(Error::Shape(format!(
            "design has {p} columns but the model has dimension {}",
            model.dim()
        )));
    }
    let centered = x - &model.mean;
    let mut x_tilde = x - &centered.dot(&model.sigma_inv_d);
    let noise = standard_normal_matrix::<T>(n, p, rng);
    x_tilde += &noise.dot(&model.conditional_chol.lower().t());
    Ok(KnockoffCopy {
        x_tilde,
        bootstrap_id: rng.stream_id(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{derive_stream, frobenius_relative_error, sample_mvn, symmetric_eigenvalues, toeplitz_covariance};
    use ndarray::{array, concatenate, Axis};

    fn empirical_cov(x: &Array2<f64>) -> Array2<f64> {
        let xc = x - &x.mean_axis(Axis(0)).unwrap();
        xc.t().dot(&xc) / (x.nrows() as f64 - 1.0)
    }

    #[test]
    fn equicorrelated_identity() {
        let s = equicorrelated_s(&Covariance::new(Array2::<f64>::eye(4)).unwrap()).unwrap();
        for v in s {
            assert!((v - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn equicorrelated_two_by_two() {
        // eigenvalues {1.5, 0.5} and {1.9, 0.1}
        let s = equicorrelated_s(&toeplitz_covariance(0.5f64, 2).unwrap()).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-7);
        let s = equicorrelated_s(&toeplitz_covariance(0.9f64, 2).unwrap()).unwrap();
        assert!((s[0] - 0.2).abs() < 1e-7);
        assert!((s[1] - 0.2).abs() < 1e-7);
    }

    #[test]
    fn equicorrelated_rejects_non_pd_and_non_unit() {
        let singular = Covariance::new(array![[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(equicorrelated_s(&singular), Err(Error::Domain(_))));
        let scaled = Covariance::new(array![[2.0, 0.0], [0.0, 2.0]]).unwrap();
        assert!(matches!(equicorrelated_s(&scaled), Err(Error::Domain(_))));
    }

    #[test]
    fn joint_matrix_is_psd() {
        for rho in [0.0, 0.3, 0.5, 0.7, 0.9] {
            let m = GaussianModel::oracle(Array1::zeros(30), toeplitz_covariance(rho, 30).unwrap()).unwrap();
            let ev = symmetric_eigenvalues(m.joint_covariance().view()).unwrap();
            assert!(ev[0] >= -1e-8, "rho {rho}: {}", ev[0]);
            for s in m.s() {
                assert!(*s >= 0.0 && *s <= 1.0);
            }
        }
    }

    #[test]
    fn estimated_identity_design() {
        let n = 10_000;
        let x: Array2<f64> = sample_mvn(&Array1::zeros(5), &CholeskyFactor::identity(5), n, &mut derive_stream(3, 0)).unwrap();
        let m = estimate_gaussian(&x, Shrinkage::Fixed(0.0)).unwrap();
        let id = Array2::<f64>::eye(5);
        for (a, b) in m.sigma().matrix().iter().zip(id.iter()) {
            assert!((a - b).abs() < 0.1);
        }
    }

    #[test]
    fn full_shrinkage_is_diagonal() {
        let chol = cholesky(&toeplitz_covariance(0.6, 6).unwrap()).unwrap();
        let x = sample_mvn(&Array1::zeros(6), &chol, 200, &mut derive_stream(4, 0)).unwrap();
        let m = estimate_gaussian(&x, Shrinkage::Fixed(1.0)).unwrap();
        let sig = m.sigma().matrix();
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    assert_eq!(sig[[i, j]], 0.0);
                }
            }
        }
    }

    #[test]
    fn auto_shrinkage_handles_wide_designs() {
        let chol = cholesky(&toeplitz_covariance(0.5, 60).unwrap()).unwrap();
        let x = sample_mvn(&Array1::zeros(60), &chol, 30, &mut derive_stream(9, 0)).unwrap();
        let m = estimate_gaussian(&x, Shrinkage::Auto).unwrap();
        let eta = m.shrinkage().unwrap();
        assert!(eta > 0.0 && eta <= 1.0, "eta = {eta}");
        assert!(matches!(
            estimate_gaussian(&x, Shrinkage::Fixed(0.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn constant_column_is_degenerate() {
        let mut x = Array2::<f64>::zeros((10, 3));
        for i in 0..10 {
            x[[i, 0]] = i as f64;
            x[[i, 1]] = 4.0;
            x[[i, 2]] = (i * i) as f64;
        }
        assert_eq!(
            estimate_gaussian(&x, Shrinkage::Auto).unwrap_err(),
            Error::DegenerateFeature { column: 1 }
        );
    }

    #[test]
    fn zero_diagonal_copies_the_design() {
        let sigma = toeplitz_covariance(0.5, 4).unwrap();
        let model = GaussianModel::with_s(array![1.0, 2.0, 3.0, 4.0], sigma, Array1::zeros(4)).unwrap();
        let chol = cholesky(&toeplitz_covariance(0.5, 4).unwrap()).unwrap();
        let x = sample_mvn(model.mean(), &chol, 25, &mut derive_stream(1, 1)).unwrap();
        let ko = sample_knockoffs(&x, &model, &mut derive_stream(1, 2)).unwrap();
        assert_eq!(ko.x_tilde, x);
    }

    #[test]
    fn identity_knockoffs_are_independent() {
        let n = 50_000;
        let model = GaussianModel::oracle(Array1::zeros(3), Covariance::new(Array2::eye(3)).unwrap()).unwrap();
        let x = sample_mvn(model.mean(), &CholeskyFactor::identity(3), n, &mut derive_stream(6, 0)).unwrap();
        let ko = sample_knockoffs(&x, &model, &mut derive_stream(6, 1)).unwrap();
        let joint = concatenate![Axis(1), x, ko.x_tilde];
        let cov = empirical_cov(&joint);
        for i in 0..3 {
            for j in 0..3 {
                assert!(cov[[i, j + 3]].abs() < 0.05);
            }
        }
    }

    #[test]
    fn oracle_knockoffs_match_joint_second_moments() {
        let p = 20;
        let sigma = toeplitz_covariance(0.5, p).unwrap();
        let chol = cholesky(&sigma).unwrap();
        let model = GaussianModel::oracle(Array1::zeros(p), sigma).unwrap();
        let x = sample_mvn(model.mean(), &chol, 50_000, &mut derive_stream(8, 0)).unwrap();
        let ko = sample_knockoffs(&x, &model, &mut derive_stream(8, 1)).unwrap();
        let joint = concatenate![Axis(1), x, ko.x_tilde];
        let err = frobenius_relative_error(&empirical_cov(&joint), &model.joint_covariance());
        assert!(err < 0.05, "relative error {err}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let sigma = toeplitz_covariance(0.3, 5).unwrap();
        let chol = cholesky(&sigma).unwrap();
        let model = GaussianModel::oracle(Array1::zeros(5), sigma).unwrap();
        let x = sample_mvn(model.mean(), &chol, 40, &mut derive_stream(2, 0)).unwrap();
        let a = sample_knockoffs(&x, &model, &mut derive_stream(2, 3)).unwrap();
        let b = sample_knockoffs(&x, &model, &mut derive_stream(2, 3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.bootstrap_id, 3);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let model = GaussianModel::oracle(Array1::zeros(3), toeplitz_covariance(0.2, 3).unwrap()).unwrap();
        let x = Array2::<f64>::zeros((5, 4));
        assert!(matches!(sample_knockoffs(&x, &model, &mut derive_stream(0, 0)), Err(Error::Shape(_))));
    }
}
