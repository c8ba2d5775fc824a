//! Vanilla knockoff inference on Lasso-coefficient-difference statistics.

use std::collections::BTreeSet;

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Super-uniformity constant of the intermediate p-values,
/// `(√22 − 2) / (7√22 − 32)`.
pub fn kappa() -> f64 {
    let r = 22f64.sqrt();
    (r - 2.0) / (7.0 * r - 32.0)
}

/// Published upper bound on [`kappa`].
pub const KAPPA_BOUND: f64 = 3.24;

/// Knockoff statistics `W` of one knockoff draw.
#[derive(Debug, Clone, PartialEq)]
pub struct KnockoffStats<T> {
    pub w: Array1<T>,
    pub bootstrap_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntermediatePValues<T> {
    pub pi: Array1<T>,
    pub offset_c: T,
}

/// `W_j = |β̂_j| − |β̂_{j+p}|` for a coefficient vector over `[X, X̃]`.
pub fn lcd_statistic<T: Scalar>(beta_hat: ArrayView1<T>) -> Result<KnockoffStats<T>> {
    let len = beta_hat.len();
    if len % 2 != 0 {
        return Err(Error::Shape(format!(
            "coefficient vector over [X, X̃] must have even length, got {len}"
        )));
    }
    let p = len / 2;
    let w = Array1::from_shape_fn(p, |j| beta_hat[j].abs() - beta_hat[j + p].abs());
    Ok(KnockoffStats { w, bootstrap_id: 0 })
}

/// Data-dependent knockoff threshold
/// `τ₊ = min{ t > 0 : (1 + #{W_j ≤ −t}) / (#{W_j ≥ t} ∨ 1) ≤ α }`,
/// with `+∞` when no candidate qualifies. Candidates are the distinct
/// nonzero `|W_j|`.
pub fn knockoff_threshold<T: Scalar>(stats: &KnockoffStats<T>, alpha: T) -> T {
    let w = &stats.w;
    let mut candidates: Vec<T> = w
        .iter()
        .filter(|v| **v != T::zero())
        .map(|v| v.abs())
        .collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    candidates.dedup();

    // W sorted ascending lets both counts be read off by binary search.
    let mut sorted: Vec<T> = w.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    for t in candidates {
        let negatives = sorted.partition_point(|v| *v <= -t);
        let positives = sorted.len() - sorted.partition_point(|v| *v < t);
        let ratio = T::count(1 + negatives) / T::count(positives.max(1));
        if ratio <= alpha {
            return t;
        }
    }
    T::infinity()
}

/// `{ j : W_j ≥ τ₊ }` as 0-based indices.
pub fn vanilla_select<T: Scalar>(stats: &KnockoffStats<T>, alpha: T) -> BTreeSet<usize> {
    let tau = knockoff_threshold(stats, alpha);
    if tau.is_infinite() {
        return BTreeSet::new();
    }
    stats
        .w
        .iter()
        .enumerate()
        .filter(|(_, v)| **v >= tau)
        .map(|(j, _)| j)
        .collect()
}

/// `π_j = min(1, (c + #{k : W_k ≤ −W_j}) / p)` for `W_j > 0`, else `1`.
pub fn intermediate_pvalues<T: Scalar>(
    stats: &KnockoffStats<T>,
    offset_c: T,
) -> Result<IntermediatePValues<T>> {
    if !(offset_c > T::zero()) {
        return Err(Error::Config(format!("offset c must be positive, got {offset_c}")));
    }
    let w = &stats.w;
    let p = T::count(w.len());
    let mut sorted: Vec<T> = w.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    let pi = w.mapv(|wj| {
        if wj > T::zero() {
            let count = sorted.partition_point(|v| *v <= -wj);
            ((offset_c + T::count(count)) / p).min(T::one())
        } else {
            T::one()
        }
    });
    Ok(IntermediatePValues { pi, offset_c })
}
