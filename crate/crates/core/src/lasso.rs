//! Lasso by cyclic coordinate descent.
//!
//! Objective: `½‖y − Zβ‖² + λ‖β‖₁` (no `1/n` factor). With that convention
//! the smallest penalty giving `β̂ = 0` is `max_j |z_jᵀ y|` and the
//! stationarity conditions read `z_jᵀ(y − Zβ̂) = λ sign(β̂_j)` on the support
//! and `|z_jᵀ(y − Zβ̂)| ≤ λ` off it.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::scalar::Scalar;

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit<T> {
    pub beta_hat: Array1<T>,
    pub lambda: T,
    /// Coordinate sweeps performed (full and active-set).
    pub n_iters: usize,
    /// The last full sweep moved no coefficient by more than the tolerance.
    pub converged: bool,
}

/// Cross-validation settings for [`select_lambda_cv`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOptions {
    pub folds: usize,
    pub grid_size: usize,
    pub grid_ratio: f64,
    /// Coordinate-descent tolerance along each fold's path, relative to the
    /// norm of the training response.
    pub tol: f64,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            grid_size: 100,
            grid_ratio: 0.01,
            tol: 1e-4,
        }
    }
}

/// Smallest `λ` for which the Lasso solution is identically zero.
pub fn lambda_max<T: Scalar>(z: ArrayView2<T>, y: ArrayView1<T>) -> T {
    // same inner-product kernel as the solver, so λ = λ_max yields exact zeros
    let design = ColumnDesign::new(z);
    let y = y.to_vec();
    (0..z.ncols())
        .map(|j| dot(design.col(j), &y).abs())
        .fold(T::zero(), |m, c| m.max(c))
}

pub fn soft_threshold<T: Scalar>(x: T, lambda: T) -> T {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        T::zero()
    }
}

/// `½‖y − Zβ‖² + λ‖β‖₁`
pub fn lasso_objective<T: Scalar>(
    z: ArrayView2<T>,
    y: ArrayView1<T>,
    beta: ArrayView1<T>,
    lambda: T,
) -> T {
    let r = &y - &z.dot(&beta);
    T::lit(0.5) * r.dot(&r) + lambda * beta.iter().map(|b| b.abs()).sum::<T>()
}

/// Largest violation of the Lasso stationarity conditions at `beta`.
pub fn kkt_residual<T: Scalar>(
    z: ArrayView2<T>,
    y: ArrayView1<T>,
    beta: ArrayView1<T>,
    lambda: T,
) -> T {
    let r = &y - &z.dot(&beta);
    let c = z.t().dot(&r);
    c.iter()
        .zip(beta.iter())
        .map(|(cj, bj)| {
            if *bj == T::zero() {
                (cj.abs() - lambda).max(T::zero())
            } else {
                (*cj - lambda * bj.signum()).abs()
            }
        })
        .fold(T::zero(), |m, v| m.max(v))
}

/// Solves the Lasso at a single `λ` from a zero start.
///
/// Returns the fit even when `max_iter` is exhausted; `converged` reports
/// whether the tolerance was met.
pub fn lasso_cd<T: Scalar>(
    z: ArrayView2<T>,
    y: ArrayView1<T>,
    lambda: T,
    tol: T,
    max_iter: usize,
) -> Result<LassoFit<T>> {
    let (n, q) = z.dim();
    if y.len() != n {
        return Err(Error::Shape(format!(
            "design has {n} rows but the response has length {}",
            y.len()
        )));
    }
    if !(lambda >= T::zero()) {
        return Err(Error::Domain(format!("lambda must be nonnegative, got {lambda}")));
    }
    check_finite(z, y)?;
    let design = ColumnDesign::new(z);
    let mut beta = vec![T::zero(); q];
    let mut resid: Vec<T> = y.to_vec();
    let all: Vec<usize> = (0..q).collect();
    let (n_iters, converged) =
        design.solve(lambda, &all, &mut beta, &mut resid, tol, max_iter);
    Ok(LassoFit {
        beta_hat: Array1::from(beta),
        lambda,
        n_iters,
        converged,
    })
}

fn check_finite<T: Scalar>(z: ArrayView2<T>, y: ArrayView1<T>) -> Result<()> {
    if let Some(pos) = z.iter().position(|v| !v.is_finite()) {
        let q = z.ncols();
        return Err(Error::Data(format!(
            "non-finite design entry at row {}, column {}",
            pos / q,
            pos % q
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!("non-finite response entry at row {i}")));
    }
    Ok(())
}

/// Geometric grid from `λ_max` down to `ratio · λ_max`.
pub fn lambda_grid<T: Scalar>(lambda_max: T, grid_size: usize, ratio: f64) -> Vec<T> {
    if grid_size == 1 {
        return vec![lambda_max];
    }
    let step = ratio.ln() / (grid_size - 1) as f64;
    (0..grid_size)
        .map(|k| lambda_max * T::lit((step * k as f64).exp()))
        .collect()
}

/// K-fold cross-validated choice of `λ` on a geometric grid.
///
/// Folds are drawn from `rng`; each training fold is re-centered and its
/// penalty rescaled by `n_train / n` so the grid refers to the full-sample
/// objective. Returns the grid value with the smallest pooled held-out
/// squared error (the largest such value on ties).
pub fn select_lambda_cv<T: Scalar>(
    z: ArrayView2<T>,
    y: ArrayView1<T>,
    options: CvOptions,
    rng: &mut RngStream,
) -> Result<T> {
    let (n, q) = z.dim();
    let CvOptions {
        folds,
        grid_size,
        grid_ratio,
        tol,
    } = options;
    if folds < 2 || n < folds {
        return Err(Error::Config(format!(
            "cross-validation needs 2 <= folds <= n, got folds = {folds}, n = {n}"
        )));
    }
    if grid_size == 0 || !(grid_ratio > 0.0 && grid_ratio < 1.0) {
        return Err(Error::Config(format!(
            "lambda grid needs size >= 1 and ratio in (0, 1), got {grid_size} and {grid_ratio}"
        )));
    }
    if y.len() != n {
        return Err(Error::Shape(format!(
            "design has {n} rows but the response has length {}",
            y.len()
        )));
    }
    check_finite(z, y)?;
    let lmax = lambda_max(z, y);
    if !(lmax > T::zero()) {
        return Err(Error::Data(
            "response is orthogonal to every design column".into(),
        ));
    }
    let grid = lambda_grid(lmax, grid_size, grid_ratio);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut fold_of = vec![0usize; n];
    for (pos, &row) in order.iter().enumerate() {
        fold_of[row] = pos % folds;
    }

    let mut sse = vec![T::zero(); grid.len()];
    for fold in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
        let z_train = z.select(Axis(0), &train);
        let y_train = y.select(Axis(0), &train);
        let z_mean = z_train.mean_axis(Axis(0)).expect("non-empty fold");
        let y_mean = y_train.mean().expect("non-empty fold");
        let z_train = &z_train - &z_mean;
        let y_train = &y_train - y_mean;
        let z_test = &z.select(Axis(0), &test) - &z_mean;
        let y_test = &y.select(Axis(0), &test) - y_mean;

        let scale = T::count(train.len()) / T::count(n);
        let fold_tol = T::lit(tol) * y_train.dot(&y_train).sqrt();
        let design = ColumnDesign::new(z_train.view());
        let mut beta = vec![T::zero(); q];
        let mut resid = y_train.to_vec();
        let mut prev_lambda = grid[0] * scale;
        for (k, lam) in grid.iter().enumerate() {
            let lam = *lam * scale;
            design.solve_screened(
                lam,
                prev_lambda,
                &mut beta,
                &mut resid,
                fold_tol,
                DEFAULT_MAX_ITER,
            );
            prev_lambda = lam;
            let mut err = T::zero();
            for (t, yt) in y_test.iter().enumerate() {
                let mut pred = T::zero();
                for (j, b) in beta.iter().enumerate() {
                    if *b != T::zero() {
                        pred = pred + z_test[[t, j]] * *b;
                    }
                }
                let d = *yt - pred;
                err = err + d * d;
            }
            sse[k] = sse[k] + err;
        }
    }
    let best = sse
        .iter()
        .enumerate()
        .fold(0, |best, (k, e)| if *e < sse[best] { k } else { best });
    Ok(grid[best])
}

/// Design matrix stored column-contiguous with cached squared norms.
struct ColumnDesign<T> {
    /// `q × n`, row `j` holds column `j` of the design.
    cols: Array2<T>,
    col_sq: Vec<T>,
}

impl<T: Scalar> ColumnDesign<T> {
    fn new(z: ArrayView2<T>) -> Self {
        let cols = z.t().as_standard_layout().into_owned();
        let col_sq = cols
            .outer_iter()
            .map(|c| dot(c.as_slice().unwrap(), c.as_slice().unwrap()))
            .collect();
        Self { cols, col_sq }
    }

    fn col(&self, j: usize) -> &[T] {
        self.cols.row(j).to_slice().expect("standard layout")
    }

    /// One sweep over `set`; returns the largest absolute coefficient change.
    fn sweep(&self, lambda: T, set: &[usize], beta: &mut [T], resid: &mut [T]) -> T {
        let mut max_delta = T::zero();
        for &j in set {
            let sq = self.col_sq[j];
            if sq == T::zero() {
                continue;
            }
            let col = self.col(j);
            let old = beta[j];
            let g = dot(col, resid) + sq * old;
            let new = soft_threshold(g, lambda) / sq;
            let delta = new - old;
            if delta != T::zero() {
                axpy(-delta, col, resid);
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        max_delta
    }

    /// Full sweeps over `set` interleaved with sweeps restricted to the
    /// current nonzero coefficients, until a full sweep moves nothing by
    /// more than `tol`.
    fn solve(
        &self,
        lambda: T,
        set: &[usize],
        beta: &mut [T],
        resid: &mut [T],
        tol: T,
        max_iter: usize,
    ) -> (usize, bool) {
        let mut iters = 0;
        while iters < max_iter {
            let delta = self.sweep(lambda, set, beta, resid);
            iters += 1;
            if delta <= tol {
                return (iters, true);
            }
            let active: Vec<usize> = set
                .iter()
                .copied()
                .filter(|&j| beta[j] != T::zero())
                .collect();
            while iters < max_iter {
                let delta = self.sweep(lambda, &active, beta, resid);
                iters += 1;
                if delta <= tol {
                    break;
                }
            }
        }
        (iters, false)
    }

    /// Warm-started solve at `lambda` after a solve at `prev_lambda`, using
    /// the sequential strong rule to restrict the working set and a KKT scan
    /// over the discarded coordinates to restore any that were wrongly
    /// dropped.
    fn solve_screened(
        &self,
        lambda: T,
        prev_lambda: T,
        beta: &mut [T],
        resid: &mut [T],
        tol: T,
        max_iter: usize,
    ) {
        let q = beta.len();
        let cutoff = T::lit(2.0) * lambda - prev_lambda;
        let corr: Vec<T> = (0..q).map(|j| dot(self.col(j), resid)).collect();
        let mut in_set: Vec<bool> = (0..q)
            .map(|j| beta[j] != T::zero() || corr[j].abs() >= cutoff)
            .collect();
        loop {
            let set: Vec<usize> = (0..q).filter(|&j| in_set[j]).collect();
            self.solve(lambda, &set, beta, resid, tol, max_iter);
            let mut violated = false;
            for j in 0..q {
                if !in_set[j] && self.col_sq[j] > T::zero() {
                    if dot(self.col(j), resid).abs() > lambda {
                        in_set[j] = true;
                        violated = true;
                    }
                }
            }
            if !violated {
                break;
            }
        }
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] = acc[0] + a[i] * b[i];
        acc[1] = acc[1] + a[i + 1] * b[i + 1];
        acc[2] = acc[2] + a[i + 2] * b[i + 2];
        acc[3] = acc[3] + a[i + 3] * b[i + 3];
    }
    let mut tail = T::zero();
    for i in 4 * chunks..a.len() {
        tail = tail + a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * *xi;
    }
}

/// Centers every column and scales it to unit Euclidean norm. Columns with
/// zero norm after centering are left at zero.
pub fn standardize_columns<T: Scalar>(z: &Array2<T>) -> Array2<T> {
    let mean = z.mean_axis(Axis(0)).expect("non-empty design");
    let mut out = z - &mean;
    for mut col in out.axis_iter_mut(Axis(1)) {
        let norm = col.iter().map(|v| *v * *v).sum::<T>().sqrt();
        if norm > T::zero() {
            col /= norm;
        } else {
            col.fill(T::zero());
        }
    }
    out
}

pub fn center<T: Scalar>(y: ArrayView1<T>) -> Array1<T> {
    let m = y.mean().expect("non-empty response");
    y.mapv(|v| v - m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{derive_stream, standard_normal_matrix};
    use ndarray::array;

    fn random_problem(n: usize, q: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = derive_stream(seed, 0);
        let z = standardize_columns(&standard_normal_matrix(n, q, &mut rng));
        let noise: Array2<f64> = standard_normal_matrix(n, 1, &mut rng);
        let mut y = noise.column(0).to_owned();
        for j in 0..q.min(3) {
            y.scaled_add(2.0, &z.column(j));
        }
        (z, center(y.view()))
    }

    #[test]
    fn lambda_max_edge_cases() {
        let z = array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let y = array![1.0, 1.0, 1.0, 1.0];
        assert_eq!(lambda_max(z.view(), y.view()), 0.0);
        let z = array![[1.0], [2.0]];
        let y = array![1.0, 1.0];
        assert_eq!(lambda_max(z.view(), y.view()), 3.0);
    }

    #[test]
    fn above_lambda_max_is_exactly_zero() {
        let (z, y) = random_problem(40, 15, 1);
        let lmax = lambda_max(z.view(), y.view());
        for factor in [1.0, 1.001, 5.0] {
            let fit = lasso_cd(z.view(), y.view(), lmax * factor, 1e-7, 1000).unwrap();
            assert!(fit.converged);
            assert!(fit.beta_hat.iter().all(|b| *b == 0.0));
        }
    }

    #[test]
    fn orthonormal_design_is_soft_thresholding() {
        // columns of a scaled Hadamard matrix
        let h: Array2<f64> = array![
            [1.0, 1.0, 1.0, 1.0],
            [1.0, -1.0, 1.0, -1.0],
            [1.0, 1.0, -1.0, -1.0],
            [1.0, -1.0, -1.0, 1.0]
        ] / 2.0;
        let y = array![3.0, -1.0, 0.5, 2.0];
        let lambda = 0.7;
        let fit = lasso_cd(h.view(), y.view(), lambda, 1e-12, 100).unwrap();
        for j in 0..4 {
            let expected = soft_threshold(h.column(j).dot(&y), lambda);
            assert!((fit.beta_hat[j] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_lambda_recovers_least_squares() {
        let (z, y) = random_problem(60, 5, 2);
        let fit = lasso_cd(z.view(), y.view(), 1e-12, 1e-12, 100_000).unwrap();
        assert!(fit.converged);
        // normal equations solved by Gaussian elimination
        let mut a = z.t().dot(&z);
        let mut b = z.t().dot(&y);
        let q = 5;
        for k in 0..q {
            for i in (k + 1)..q {
                let f = a[[i, k]] / a[[k, k]];
                for j in k..q {
                    a[[i, j]] -= f * a[[k, j]];
                }
                b[i] -= f * b[k];
            }
        }
        let mut ls = vec![0.0; q];
        for i in (0..q).rev() {
            let s: f64 = ((i + 1)..q).map(|j| a[[i, j]] * ls[j]).sum();
            ls[i] = (b[i] - s) / a[[i, i]];
        }
        for j in 0..q {
            assert!((fit.beta_hat[j] - ls[j]).abs() < 1e-4);
        }
    }

    #[test]
    fn converged_fits_satisfy_kkt() {
        for seed in 0..10 {
            let (z, y) = random_problem(50, 80, 100 + seed);
            let lmax = lambda_max(z.view(), y.view());
            let lambda = 0.1 * lmax;
            let fit = lasso_cd(z.view(), y.view(), lambda, 1e-9, 100_000).unwrap();
            assert!(fit.converged);
            assert!(kkt_residual(z.view(), y.view(), fit.beta_hat.view(), lambda) < 1e-5);
        }
    }

    #[test]
    fn objective_decreases_with_more_sweeps() {
        let (z, y) = random_problem(30, 40, 7);
        let lambda = 0.05 * lambda_max(z.view(), y.view());
        let mut last = f64::INFINITY;
        for iters in 1..30 {
            let fit = lasso_cd(z.view(), y.view(), lambda, 0.0, iters).unwrap();
            let obj = lasso_objective(z.view(), y.view(), fit.beta_hat.view(), lambda);
            assert!(obj <= last + 1e-12, "{obj} > {last}");
            last = obj;
        }
    }

    #[test]
    fn exhausted_iterations_are_reported() {
        let (z, y) = random_problem(30, 40, 8);
        let lambda = 0.01 * lambda_max(z.view(), y.view());
        let fit = lasso_cd(z.view(), y.view(), lambda, 1e-14, 2).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.n_iters, 2);
    }

    #[test]
    fn nan_is_a_data_error() {
        let z = array![[1.0, f64::NAN], [0.0, 1.0]];
        let y = array![1.0, 0.0];
        assert!(matches!(lasso_cd(z.view(), y.view(), 0.1, 1e-7, 10), Err(Error::Data(_))));
    }

    #[test]
    fn cv_rejects_too_few_rows() {
        let (z, y) = random_problem(4, 3, 1);
        let opts = CvOptions { folds: 5, ..Default::default() };
        assert!(matches!(
            select_lambda_cv(z.view(), y.view(), opts, &mut derive_stream(0, 0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn cv_is_deterministic_and_on_grid() {
        let (z, y) = random_problem(80, 30, 3);
        let a = select_lambda_cv(z.view(), y.view(), CvOptions::default(), &mut derive_stream(5, 1)).unwrap();
        let b = select_lambda_cv(z.view(), y.view(), CvOptions::default(), &mut derive_stream(5, 1)).unwrap();
        assert_eq!(a, b);
        let lmax = lambda_max(z.view(), y.view());
        assert!(lambda_grid(lmax, 100, 0.01).contains(&a));
    }

    #[test]
    fn screened_path_matches_plain_solve() {
        let (z, y) = random_problem(40, 120, 11);
        let design = ColumnDesign::new(z.view());
        let grid = lambda_grid(lambda_max(z.view(), y.view()), 30, 0.1);
        let mut beta = vec![0.0; 120];
        let mut resid = y.to_vec();
        let mut prev = grid[0];
        for lam in &grid {
            design.solve_screened(*lam, prev, &mut beta, &mut resid, 1e-10, 100_000);
            prev = *lam;
            let plain = lasso_cd(z.view(), y.view(), *lam, 1e-10, 100_000).unwrap();
            assert!(plain.converged, "plain solve at {lam}: {} sweeps", plain.n_iters);
            let screened = Array1::from(beta.clone());
            assert!(kkt_residual(z.view(), y.view(), screened.view(), *lam) < 1e-6);
            let gap = lasso_objective(z.view(), y.view(), screened.view(), *lam)
                - lasso_objective(z.view(), y.view(), plain.beta_hat.view(), *lam);
            assert!(gap.abs() < 1e-8, "objective gap {gap}");
        }
    }

    #[test]
    fn standardized_columns_are_centered_unit_norm() {
        let mut rng = derive_stream(1, 0);
        let z: Array2<f64> = standard_normal_matrix(20, 4, &mut rng) + 3.0;
        let s = standardize_columns(&z);
        for col in s.columns() {
            assert!(col.sum().abs() < 1e-12);
            assert!((col.dot(&col) - 1.0).abs() < 1e-12);
        }
        let constant = Array2::<f64>::ones((5, 2));
        assert!(standardize_columns(&constant).iter().all(|v| *v == 0.0));
    }
}
