//! Aggregation of multiple knockoffs.
//!
//! Each bootstrap `b` draws a knockoff copy from stream `(master_seed, b)`,
//! fits the Lasso on the standardized `[X, X̃⁽ᵇ⁾]`, and converts its
//! statistics to intermediate p-values. The per-feature p-values are
//! combined by quantile aggregation and thresholded with a BH or BY
//! step-up procedure.

use std::collections::BTreeSet;

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{
    intermediate_pvalues, kappa, knockoff_threshold, lcd_statistic, vanilla_select,
    KnockoffStats,
};
use crate::knockoff::{sample_knockoffs, GaussianModel};
use crate::lasso::{
    center, lasso_cd, select_lambda_cv, standardize_columns, CvOptions, DEFAULT_TOL,
};
use crate::numerics::derive_stream;
use crate::scalar::Scalar;

/// Sweep cap for the final fit of each bootstrap. Cross-validation may pick
/// the smallest grid value, where the cold-started solve is near
/// interpolating and needs more sweeps than the solver default.
pub const BOOTSTRAP_MAX_ITER: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FdrMethod {
    /// Benjamini-Hochberg.
    #[default]
    Bh,
    /// Benjamini-Yekutieli.
    By,
}

/// How the Lasso penalty is chosen for each bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LambdaPolicy {
    /// K-fold cross-validation on each bootstrap's `[X, X̃]`.
    #[default]
    Cv,
    /// Fixed penalty on the standardized design (unit-norm columns).
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AkoConfig {
    pub n_bootstraps: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub fdr_method: FdrMethod,
    pub offset_c: f64,
    pub master_seed: u64,
    pub lambda_policy: LambdaPolicy,
    /// Run the step-up at `α / κ` instead of `α`.
    pub kappa_correct: bool,
    #[serde(skip, default)]
    pub cv: CvOptions,
}

impl Default for AkoConfig {
    fn default() -> Self {
        Self {
            n_bootstraps: 25,
            gamma: 0.3,
            alpha: 0.1,
            fdr_method: FdrMethod::Bh,
            offset_c: 1.0,
            master_seed: 0,
            lambda_policy: LambdaPolicy::Cv,
            kappa_correct: false,
            cv: CvOptions::default(),
        }
    }
}

impl AkoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bootstraps < 1 {
            return Err(Error::Config("number of bootstraps must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.offset_c > 0.0) {
            return Err(Error::Config(format!("offset c must be positive, got {}", self.offset_c)));
        }
        if let LambdaPolicy::Fixed(l) = self.lambda_policy {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("fixed lambda must be positive, got {l}")));
            }
        }
        Ok(())
    }

    /// Level handed to the step-up procedure.
    pub fn effective_alpha(&self) -> f64 {
        if self.kappa_correct {
            self.alpha / kappa()
        } else {
            self.alpha
        }
    }
}

/// Outcome of one bootstrap.
#[derive(Debug, Clone, PartialEq)]
pub struct KnockoffRun<T> {
    pub bootstrap_id: u64,
    pub w: Array1<T>,
    pub pi: Array1<T>,
    pub lambda: T,
    pub n_iters: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationResult<T> {
    pub pi_bar: Array1<T>,
    /// 1-based rank of the step-up cut, if any p-value qualified.
    pub k_hat: Option<usize>,
    /// 0-based feature indices.
    pub selected: BTreeSet<usize>,
    pub per_bootstrap: Vec<KnockoffRun<T>>,
}

/// Vanilla knockoff result on the first bootstrap stream.
#[derive(Debug, Clone, PartialEq)]
pub struct KoResult<T> {
    pub run: KnockoffRun<T>,
    pub threshold: T,
    pub selected: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepUp {
    pub k_hat: Option<usize>,
    pub selected: BTreeSet<usize>,
}

/// Position of the `γ`-quantile among `b` sorted values: the `⌈γb⌉`-th order
/// statistic (1-based). The small offset keeps products such as `0.3 × 10`
/// from rounding up past an exact integer.
pub fn quantile_rank(gamma: f64, b: usize) -> usize {
    ((gamma * b as f64 - 1e-9).ceil() as usize).clamp(1, b)
}

/// `π̄_j = min(1, q_γ({π_j⁽ᵇ⁾}) / γ)` for every column of a `B × p` matrix.
pub fn quantile_aggregate<T: Scalar>(pvals: ArrayView2<T>, gamma: T) -> Result<Array1<T>> {
    if !(gamma > T::zero() && gamma <= T::one()) {
        return Err(Error::Config(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let (b, p) = pvals.dim();
    if b == 0 {
        return Err(Error::Shape("no bootstrap p-values to aggregate".into()));
    }
    if pvals.iter().any(|v| !(*v > T::zero() && *v <= T::one())) {
        return Err(Error::Data("p-values to aggregate must lie in (0, 1]".into()));
    }
    let rank = quantile_rank(gamma.as_f64(), b);
    let mut out = Array1::<T>::zeros(p);
    let mut col = Vec::with_capacity(b);
    for j in 0..p {
        col.clear();
        col.extend(pvals.column(j).iter().copied());
        col.sort_by(|a, c| a.partial_cmp(c).expect("finite p-values"));
        out[j] = (col[rank - 1] / gamma).min(T::one());
    }
    Ok(out)
}

/// Benjamini-Hochberg step-up at level `alpha`.
pub fn bh_select<T: Scalar>(pvals: ArrayView1<T>, alpha: T) -> StepUp {
    step_up(pvals, alpha)
}

/// Benjamini-Yekutieli step-up: BH at level `β(p)·alpha`,
/// `β(p) = (Σ_{i≤p} 1/i)⁻¹`.
pub fn by_select<T: Scalar>(pvals: ArrayView1<T>, alpha: T) -> StepUp {
    step_up(pvals, alpha * by_factor(pvals.len()))
}

pub fn by_factor<T: Scalar>(p: usize) -> T {
    let harmonic: T = (1..=p).map(|i| T::one() / T::count(i)).sum();
    T::one() / harmonic
}

fn step_up<T: Scalar>(pvals: ArrayView1<T>, level: T) -> StepUp {
    let m = pvals.len();
    let mut sorted: Vec<T> = pvals.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite p-values"));
    let mf = T::count(m);
    // accept values on the k·level/m line despite rounding in k·level
    let slack = T::one() + T::lit(8.0) * T::epsilon();
    let k_hat = (1..=m)
        .rev()
        .find(|&k| sorted[k - 1] <= T::count(k) * level / mf * slack);
    let selected = match k_hat {
        Some(k) => {
            let cut = sorted[k - 1];
            pvals
                .iter()
                .enumerate()
                .filter(|(_, v)| **v <= cut)
                .map(|(j, _)| j)
                .collect()
        }
        None => BTreeSet::new(),
    };
    StepUp { k_hat, selected }
}

/// Runs one bootstrap: knockoff draw, Lasso on the standardized
/// `[X, X̃]`, statistics and intermediate p-values.
pub fn run_bootstrap<T: Scalar>(
    x: &Array2<T>,
    y_centered: ArrayView1<T>,
    model: &GaussianModel<T>,
    config: &AkoConfig,
    bootstrap_id: u64,
) -> Result<KnockoffRun<T>> {
    let mut rng = derive_stream(config.master_seed, bootstrap_id);
    let copy = sample_knockoffs(x, model, &mut rng)?;
    let z = standardize_columns(&concatenate![Axis(1), *x, copy.x_tilde]);
    let lambda = match config.lambda_policy {
        LambdaPolicy::Cv => select_lambda_cv(z.view(), y_centered, config.cv, &mut rng)?,
        LambdaPolicy::Fixed(l) => T::lit(l),
    };
    let fit = lasso_cd(
        z.view(),
        y_centered,
        lambda,
        T::lit(DEFAULT_TOL),
        BOOTSTRAP_MAX_ITER,
    )?;
    let mut stats = lcd_statistic(fit.beta_hat.view())?;
    stats.bootstrap_id = bootstrap_id;
    let pi = intermediate_pvalues(&stats, T::lit(config.offset_c))?.pi;
    Ok(KnockoffRun {
        bootstrap_id,
        w: stats.w,
        pi,
        lambda,
        n_iters: fit.n_iters,
        converged: fit.converged,
    })
}

fn check_shapes<T>(x: &Array2<T>, y: ArrayView1<T>, model: &GaussianModel<T>) -> Result<()>
where
    T: Scalar,
{
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "design has {} rows but the response has {}",
            x.nrows(),
            y.len()
        )));
    }
    if x.ncols() != model.dim() {
        return Err(Error::Shape(format!(
            "design has {} columns but the model has dimension {}",
            x.ncols(),
            model.dim()
        )));
    }
    Ok(())
}

/// Computes the bootstraps `1..=count` in parallel, in bootstrap order.
pub fn run_bootstraps<T: Scalar>(
    x: &Array2<T>,
    y: ArrayView1<T>,
    model: &GaussianModel<T>,
    config: &AkoConfig,
    count: usize,
) -> Result<Vec<KnockoffRun<T>>> {
    config.validate()?;
    check_shapes(x, y, model)?;
    let yc = center(y);
    let outcomes: Vec<Result<KnockoffRun<T>>> = (1..=count as u64)
        .into_par_iter()
        .map(|b| run_bootstrap(x, yc.view(), model, config, b))
        .collect();
    let mut runs = Vec::with_capacity(count);
    let mut last_err = None;
    for outcome in outcomes {
        match outcome {
            Ok(run) => runs.push(run),
            Err(e) => last_err = Some(e),
        }
    }
    if runs.is_empty() {
        return Err(Error::Pipeline(format!(
            "every bootstrap failed (last error: {})",
            last_err.map(|e| e.to_string()).unwrap_or_default()
        )));
    }
    Ok(runs)
}

/// Aggregates already computed bootstraps. A run whose Lasso hit the sweep
/// cap still contributes; its `converged` flag is only a record.
pub fn aggregate_runs<T: Scalar>(
    runs: Vec<KnockoffRun<T>>,
    config: &AkoConfig,
) -> Result<AggregationResult<T>> {
    config.validate()?;
    let Some(first) = runs.first() else {
        return Err(Error::Pipeline("no bootstrap to aggregate".into()));
    };
    let p = first.pi.len();
    if let Some(run) = runs.iter().find(|r| r.pi.len() != p) {
        return Err(Error::Shape(format!(
            "bootstrap {} has {} p-values, expected {p}",
            run.bootstrap_id,
            run.pi.len()
        )));
    }
    let mut pvals = Array2::<T>::zeros((runs.len(), p));
    for (b, run) in runs.iter().enumerate() {
        pvals.row_mut(b).assign(&run.pi);
    }
    let pi_bar = quantile_aggregate(pvals.view(), T::lit(config.gamma))?;
    let level = T::lit(config.effective_alpha());
    let StepUp { k_hat, selected } = match config.fdr_method {
        FdrMethod::Bh => bh_select(pi_bar.view(), level),
        FdrMethod::By => by_select(pi_bar.view(), level),
    };
    Ok(AggregationResult {
        pi_bar,
        k_hat,
        selected,
        per_bootstrap: runs,
    })
}

/// Aggregation of multiple knockoffs on `(x, y)` with `config.n_bootstraps`
/// independent knockoff draws.
pub fn run_ako<T: Scalar>(
    x: &Array2<T>,
    y: ArrayView1<T>,
    model: &GaussianModel<T>,
    config: &AkoConfig,
) -> Result<AggregationResult<T>> {
    let runs = run_bootstraps(x, y, model, config, config.n_bootstraps)?;
    aggregate_runs(runs, config)
}

/// Vanilla knockoff filter on the knockoff draw of bootstrap stream 1, the
/// same draw AKO uses for its first bootstrap.
pub fn run_ko<T: Scalar>(
    x: &Array2<T>,
    y: ArrayView1<T>,
    model: &GaussianModel<T>,
    config: &AkoConfig,
) -> Result<KoResult<T>> {
    let run = run_bootstraps(x, y, model, config, 1)?.remove(0);
    Ok(ko_from_run(run, T::lit(config.alpha)))
}

/// Applies the vanilla knockoff threshold to a finished bootstrap.
pub fn ko_from_run<T: Scalar>(run: KnockoffRun<T>, alpha: T) -> KoResult<T> {
    let stats = KnockoffStats {
        w: run.w.clone(),
        bootstrap_id: run.bootstrap_id,
    };
    let threshold = knockoff_threshold(&stats, alpha);
    let selected = vanilla_select(&stats, alpha);
    KoResult {
        run,
        threshold,
        selected,
    }
}
