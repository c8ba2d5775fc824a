//! Dense symmetric linear algebra: covariance matrices, Cholesky factors,
//! triangular solves and a symmetric eigenvalue solver.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Symmetric positive semi-definite matrix with strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance<T> {
    entries: Array2<T>,
}

impl<T: Scalar> Covariance<T> {
    /// Validates symmetry, the diagonal and positive semi-definiteness.
    pub fn new(entries: Array2<T>) -> Result<Self> {
        let (rows, cols) = entries.dim();
        if rows != cols || rows == 0 {
            return Err(Error::Shape(format!(
                "covariance must be a non-empty square matrix, got {rows}x{cols}"
            )));
        }
        let scale = entries.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let sym_tol = T::lit(1e-12) * scale.max(T::one());
        for i in 0..rows {
            if !(entries[[i, i]] > T::zero()) {
                return Err(Error::Domain(format!(
                    "covariance diagonal entry {i} is not strictly positive"
                )));
            }
            for j in 0..i {
                let (a, b) = (entries[[i, j]], entries[[j, i]]);
                if !a.is_finite() || (a - b).abs() > sym_tol {
                    return Err(Error::Domain(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let eig = symmetric_eigenvalues(entries.view())?;
        let (lo, hi) = (eig[0], eig[eig.len() - 1]);
        if lo < -T::lit(1e-10) * hi.abs().max(T::one()) {
            return Err(Error::Domain(format!(
                "covariance is not positive semi-definite (smallest eigenvalue {lo})"
            )));
        }
        Ok(Self { entries })
    }

    /// Wraps a matrix that is a covariance by construction.
    pub(crate) fn new_unchecked(entries: Array2<T>) -> Self {
        debug_assert_eq!(entries.nrows(), entries.ncols());
        Self { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.entries
    }

    pub fn into_matrix(self) -> Array2<T> {
        self.entries
    }

    pub fn diagonal(&self) -> Array1<T> {
        self.entries.diag().to_owned()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Array1<T> {
        symmetric_eigenvalues(self.entries.view()).expect("covariance is square")
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues()[0]
    }
}

/// Lower-triangular factor `L` with `L Lᵀ` equal to the source matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor<T> {
    lower: Array2<T>,
}

impl<T: Scalar> CholeskyFactor<T> {
    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &Array2<T> {
        &self.lower
    }

    /// Builds a factor from an explicit lower-triangular matrix.
    pub fn from_lower(lower: Array2<T>) -> Result<Self> {
        let (r, c) = lower.dim();
        if r != c {
            return Err(Error::Shape(format!("factor must be square, got {r}x{c}")));
        }
        for i in 0..r {
            for j in (i + 1)..c {
                if lower[[i, j]] != T::zero() {
                    return Err(Error::Domain(format!(
                        "factor is not lower triangular at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { lower })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            lower: Array2::eye(dim),
        }
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> Array2<T> {
        self.lower.dot(&self.lower.t())
    }

    /// Solves `L Lᵀ X = B` in place of a copy of `rhs`.
    pub fn solve(&self, rhs: &Array2<T>) -> Array2<T> {
        let n = self.dim();
        assert_eq!(rhs.nrows(), n, "right-hand side row count");
        let l = &self.lower;
        let mut x = rhs.to_owned();
        for col in 0..x.ncols() {
            // forward: L z = b
            for i in 0..n {
                let mut acc = x[[i, col]];
                for k in 0..i {
                    acc = acc - l[[i, k]] * x[[k, col]];
                }
                x[[i, col]] = acc / l[[i, i]];
            }
            // backward: Lᵀ x = z
            for i in (0..n).rev() {
                let mut acc = x[[i, col]];
                for k in (i + 1)..n {
                    acc = acc - l[[k, i]] * x[[k, col]];
                }
                x[[i, col]] = acc / l[[i, i]];
            }
        }
        x
    }
}

/// Cholesky factorization of a positive definite covariance.
pub fn cholesky<T: Scalar>(sigma: &Covariance<T>) -> Result<CholeskyFactor<T>> {
    cholesky_matrix(sigma.matrix().view())
}

/// Cholesky factorization of a raw symmetric matrix (only the lower
/// triangle is read).
pub fn cholesky_matrix<T: Scalar>(a: ArrayView2<T>) -> Result<CholeskyFactor<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape(format!(
            "cholesky needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d = d - l[[j, k]] * l[[j, k]];
        }
        if !(d > T::zero()) {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: d.as_f64(),
            });
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s = s - l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    Ok(CholeskyFactor { lower: l })
}

/// Cholesky factorization of a positive semi-definite matrix. Pivots whose
/// magnitude is below `rel_tol · max diag` are treated as exact zeros (the
/// corresponding column of the factor is zero); pivots more negative than
/// that are reported as a failure.
pub fn cholesky_semidefinite<T: Scalar>(
    a: ArrayView2<T>,
    rel_tol: T,
) -> Result<CholeskyFactor<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape(format!(
            "cholesky needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let scale = (0..n).fold(T::zero(), |m, i| m.max(a[[i, i]].abs()));
    let tol = rel_tol * scale.max(T::min_positive_value());
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d = d - l[[j, k]] * l[[j, k]];
        }
        if d < -tol || d.is_nan() {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: d.as_f64(),
            });
        }
        if d <= tol {
            continue;
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s = s - l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    Ok(CholeskyFactor { lower: l })
}

/// Eigenvalues of a symmetric matrix in ascending order, via Householder
/// tridiagonalization followed by implicit QL iterations.
pub fn symmetric_eigenvalues<T: Scalar>(a: ArrayView2<T>) -> Result<Array1<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Shape(format!(
            "eigensolver needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if n == 0 {
        return Ok(Array1::zeros(0));
    }
    let (mut d, mut e) = tridiagonalize(a);
    tridiagonal_ql(&mut d, &mut e)?;
    let mut v = d.to_vec();
    v.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    Ok(Array1::from(v))
}

/// Householder reduction to tridiagonal form. Returns the diagonal and the
/// sub-diagonal (`e[i]` couples rows `i-1` and `i`; `e[0] = 0`).
fn tridiagonalize<T: Scalar>(a: ArrayView2<T>) -> (Vec<T>, Vec<T>) {
    let n = a.nrows();
    let mut m = a.to_owned();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = T::zero();
        if l > 0 {
            let scale: T = (0..=l).map(|k| m[[i, k]].abs()).sum();
            if scale == T::zero() {
                e[i] = m[[i, l]];
            } else {
                for k in 0..=l {
                    m[[i, k]] = m[[i, k]] / scale;
                    h = h + m[[i, k]] * m[[i, k]];
                }
                let f = m[[i, l]];
                let g = if f >= T::zero() { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h = h - f * g;
                m[[i, l]] = f - g;
                let mut ff = T::zero();
                for j in 0..=l {
                    let mut gg = T::zero();
                    for k in 0..=j {
                        gg = gg + m[[j, k]] * m[[i, k]];
                    }
                    for k in (j + 1)..=l {
                        gg = gg + m[[k, j]] * m[[i, k]];
                    }
                    e[j] = gg / h;
                    ff = ff + e[j] * m[[i, j]];
                }
                let hh = ff / (h + h);
                for j in 0..=l {
                    let f = m[[i, j]];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        m[[j, k]] = m[[j, k]] - (f * e[k] + g * m[[i, k]]);
                    }
                }
            }
        } else {
            e[i] = m[[i, l]];
        }
        d[i] = h;
    }
    e[0] = T::zero();
    for i in 0..n {
        d[i] = m[[i, i]];
    }
    (d, e)
}

/// Implicit QL with Wilkinson shifts on a symmetric tridiagonal matrix.
fn tridiagonal_ql<T: Scalar>(d: &mut [T], e: &mut [T]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    let two = T::lit(2.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Construction(
                    "eigenvalue iteration did not converge".into(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + if g >= T::zero() { r.abs() } else { -r.abs() });
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] = d[i + 1] - p;
                    e[m] = T::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] = d[l] - p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    Ok(())
}

/// Symmetric Toeplitz covariance with entries `rho^|i-j|`.
pub fn toeplitz_covariance<T: Scalar>(rho: T, p: usize) -> Result<Covariance<T>> {
    if !(rho >= T::zero() && rho < T::one()) {
        return Err(Error::Domain(format!("rho must lie in [0, 1), got {rho}")));
    }
    if p == 0 {
        return Err(Error::Domain("dimension p must be at least 1".into()));
    }
    let powers: Vec<T> = (0..p)
        .map(|k| if k == 0 { T::one() } else { rho.powi(k as i32) })
        .collect();
    let m = Array2::from_shape_fn((p, p), |(i, j)| powers[i.abs_diff(j)]);
    Ok(Covariance::new_unchecked(m))
}

/// Relative Frobenius error `‖a − b‖_F / ‖b‖_F`.
pub fn frobenius_relative_error<T: Scalar>(a: &Array2<T>, b: &Array2<T>) -> T {
    let num: T = a.iter().zip(b.iter()).map(|(x, y)| (*x - *y) * (*x - *y)).sum();
    let den: T = b.iter().map(|y| *y * *y).sum();
    (num / den).sqrt()
}
