//! Synthetic benchmark and experiment drivers.
//!
//! Designs are drawn from `N(0, Σ)` with the Toeplitz covariance
//! `Σ_ij = ρ^|i−j|`, the true coefficient vector carries `round(sparsity·p)`
//! unit entries at uniformly drawn positions, and the noise is rescaled to a
//! target signal-to-noise ratio. Inference inside the experiments uses the
//! true covariance to build knockoffs.
//!
//! Every run derives its own seeds from the configuration's master seed, so
//! records do not depend on how runs are scheduled across threads.

mod stats;

use std::collections::BTreeSet;

use ndarray::Array1;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{aggregate_runs, ko_from_run, run_bootstraps, AkoConfig, FdrMethod, KnockoffRun};
use crate::error::{Error, Result};
use crate::knockoff::GaussianModel;
use crate::numerics::{cholesky, derive_stream, mix_seed, sample_mvn, toeplitz_covariance, CholeskyFactor};

pub use stats::{average_ranks, mean, sample_std, spearman, spearman_pvalue, standard_error};

const DESIGN_STREAM: u64 = 1 << 62;
const SUPPORT_STREAM: u64 = DESIGN_STREAM + 1;
const NOISE_STREAM: u64 = DESIGN_STREAM + 2;

const TAG_DATASET: u64 = 1;
const TAG_KNOCKOFF: u64 = 2;
const TAG_KO: u64 = 3;
const TAG_AKO: u64 = 4;
const TAG_PAIRS: u64 = 5;
const TAG_RUN: u64 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub sparsity: f64,
    pub snr: f64,
    pub master_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 500,
            p: 1000,
            rho: 0.5,
            sparsity: 0.06,
            snr: 3.0,
            master_seed: 0,
        }
    }
}

impl SimConfig {
    pub fn support_size(&self) -> usize {
        (self.sparsity * self.p as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::Config(format!(
                "n and p must be positive, got n = {}, p = {}",
                self.n, self.p
            )));
        }
        if !(self.rho >= 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if !(self.sparsity > 0.0 && self.sparsity < 1.0) {
            return Err(Error::Config(format!(
                "sparsity must lie in (0, 1), got {}",
                self.sparsity
            )));
        }
        if self.support_size() < 1 {
            return Err(Error::Config(format!(
                "sparsity {} gives an empty support at p = {}",
                self.sparsity, self.p
            )));
        }
        if !(self.snr > 0.0) {
            return Err(Error::Config(format!("snr must be positive, got {}", self.snr)));
        }
        Ok(())
    }

    /// Knockoff model built from the true design covariance.
    pub fn oracle_model(&self) -> Result<GaussianModel<f64>> {
        GaussianModel::oracle(Array1::zeros(self.p), toeplitz_covariance(self.rho, self.p)?)
    }

    fn design_factor(&self) -> Result<CholeskyFactor<f64>> {
        cholesky(&toeplitz_covariance(self.rho, self.p)?)
    }

    fn draw_support(&self) -> BTreeSet<usize> {
        let mut rng = derive_stream(self.master_seed, SUPPORT_STREAM);
        index::sample(&mut rng, self.p, self.support_size())
            .into_iter()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub x: crate::Matrix,
    pub y: crate::Vector,
    pub beta_star: crate::Vector,
    /// 0-based indices of the nonzero coefficients.
    pub support: BTreeSet<usize>,
    pub sigma_noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub fdp: f64,
    pub power: f64,
    pub selected_count: usize,
}

pub fn generate_dataset(config: &SimConfig) -> Result<SimDataset> {
    config.validate()?;
    let support = config.draw_support();
    generate_with(config, &config.design_factor()?, support, config.master_seed)
}

/// Dataset with `β* = 0` and unit noise, so `y` is pure noise.
pub fn generate_global_null(n: usize, p: usize, rho: f64, master_seed: u64) -> Result<SimDataset> {
    if n == 0 || p == 0 {
        return Err(Error::Config(format!("n and p must be positive, got n = {n}, p = {p}")));
    }
    let factor = cholesky(&toeplitz_covariance(rho, p)?)?;
    let x = sample_mvn(&Array1::zeros(p), &factor, n, &mut derive_stream(master_seed, DESIGN_STREAM))?;
    let y = noise(n, master_seed);
    Ok(SimDataset {
        x,
        y,
        beta_star: Array1::zeros(p),
        support: BTreeSet::new(),
        sigma_noise: 1.0,
    })
}

fn noise(n: usize, seed: u64) -> Array1<f64> {
    let mut rng = derive_stream(seed, NOISE_STREAM);
    Array1::from_shape_fn(n, |_| rng.standard_normal())
}

fn generate_with(
    config: &SimConfig,
    factor: &CholeskyFactor<f64>,
    support: BTreeSet<usize>,
    data_seed: u64,
) -> Result<SimDataset> {
    let (n, p) = (config.n, config.p);
    let x = sample_mvn(&Array1::zeros(p), factor, n, &mut derive_stream(data_seed, DESIGN_STREAM))?;
    let mut beta_star = Array1::zeros(p);
    for &j in &support {
        beta_star[j] = 1.0;
    }
    let signal = x.dot(&beta_star);
    let eps = noise(n, data_seed);
    let sigma_noise = signal.dot(&signal).sqrt() / (config.snr * eps.dot(&eps).sqrt());
    let y = &signal + &(&eps * sigma_noise);
    Ok(SimDataset {
        x,
        y,
        beta_star,
        support,
        sigma_noise,
    })
}

/// FDP and power of a selection against the true support.
///
/// Power is reported as 0 when the support is empty.
pub fn fdp_and_power(
    selected: &BTreeSet<usize>,
    support: &BTreeSet<usize>,
    p: usize,
) -> Result<SimMetrics> {
    if let Some(j) = selected.iter().chain(support).find(|&&j| j >= p) {
        return Err(Error::Data(format!("feature index {j} out of range for p = {p}")));
    }
    let true_pos = selected.intersection(support).count();
    let false_pos = selected.len() - true_pos;
    Ok(SimMetrics {
        fdp: false_pos as f64 / selected.len().max(1) as f64,
        power: true_pos as f64 / support.len().max(1) as f64,
        selected_count: selected.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ko")]
    Ko,
    #[serde(rename = "ako-bh")]
    AkoBh,
    #[serde(rename = "ako-by")]
    AkoBy,
}

impl Method {
    pub fn ako(fdr: FdrMethod) -> Self {
        match fdr {
            FdrMethod::Bh => Method::AkoBh,
            FdrMethod::By => Method::AkoBy,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Ko => "ko",
            Method::AkoBh => "ako-bh",
            Method::AkoBy => "ako-by",
        }
    }

    fn fdr_method(self) -> Option<FdrMethod> {
        match self {
            Method::Ko => None,
            Method::AkoBh => Some(FdrMethod::Bh),
            Method::AkoBy => Some(FdrMethod::By),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Outcome of one method on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell_index: usize,
    pub cell: String,
    pub method: Method,
    pub run_id: usize,
    pub fdp: f64,
    pub power: f64,
    pub selected_count: usize,
    /// Number of bootstraps that entered the aggregation; absent for KO.
    pub aggregated_bootstraps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell_index: usize,
    pub cell: String,
    pub method: Method,
    pub runs: usize,
    pub mean_fdp: f64,
    pub se_fdp: f64,
    pub mean_power: f64,
    pub se_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    /// Sorted by cell, method and run.
    pub records: Vec<RunRecord>,
    pub summary: Vec<CellSummary>,
}

impl ExperimentResult {
    fn from_records(mut records: Vec<RunRecord>) -> Self {
        records.sort_by_key(|r| (r.cell_index, r.method, r.run_id));
        let mut summary = Vec::new();
        let mut start = 0;
        while start < records.len() {
            let key = (records[start].cell_index, records[start].method);
            let end = start
                + records[start..]
                    .iter()
                    .take_while(|r| (r.cell_index, r.method) == key)
                    .count();
            let group = &records[start..end];
            let fdp: Vec<f64> = group.iter().map(|r| r.fdp).collect();
            let power: Vec<f64> = group.iter().map(|r| r.power).collect();
            summary.push(CellSummary {
                cell_index: key.0,
                cell: group[0].cell.clone(),
                method: key.1,
                runs: group.len(),
                mean_fdp: mean(&fdp),
                se_fdp: standard_error(&fdp),
                mean_power: mean(&power),
                se_power: standard_error(&power),
            });
            start = end;
        }
        Self { records, summary }
    }

    pub fn cell(&self, cell_index: usize, method: Method) -> Option<&CellSummary> {
        self.summary
            .iter()
            .find(|s| s.cell_index == cell_index && s.method == method)
    }
}

/// Scores each requested method on one dataset. All methods share the
/// knockoff draws of `knockoff_seed`; KO uses bootstrap 1.
fn evaluate(
    data: &SimDataset,
    model: &GaussianModel<f64>,
    ako: &AkoConfig,
    knockoff_seed: u64,
    methods: &[Method],
) -> Result<Vec<(Method, SimMetrics, Option<usize>)>> {
    let needs_ako = methods.iter().any(|m| *m != Method::Ko);
    let config = AkoConfig {
        master_seed: knockoff_seed,
        ..ako.clone()
    };
    let count = if needs_ako { config.n_bootstraps } else { 1 };
    let runs = run_bootstraps(&data.x, data.y.view(), model, &config, count)?;
    let p = data.x.ncols();
    methods
        .iter()
        .map(|&method| match method.fdr_method() {
            None => {
                let selected = ko_selection(&runs, config.alpha)?;
                Ok((method, fdp_and_power(&selected, &data.support, p)?, None))
            }
            Some(fdr_method) => {
                let cfg = AkoConfig {
                    fdr_method,
                    ..config.clone()
                };
                let agg = aggregate_runs(runs.clone(), &cfg)?;
                let used = agg.per_bootstrap.len();
                Ok((method, fdp_and_power(&agg.selected, &data.support, p)?, Some(used)))
            }
        })
        .collect()
}

fn ko_selection(runs: &[KnockoffRun<f64>], alpha: f64) -> Result<BTreeSet<usize>> {
    let first = runs
        .iter()
        .find(|r| r.bootstrap_id == 1)
        .ok_or_else(|| Error::Pipeline("bootstrap 1 failed".into()))?;
    Ok(ko_from_run(first.clone(), alpha).selected)
}

fn record(cell_index: usize, cell: &str, run_id: usize, scored: (Method, SimMetrics, Option<usize>)) -> RunRecord {
    let (method, m, aggregated_bootstraps) = scored;
    RunRecord {
        cell_index,
        cell: cell.to_string(),
        method,
        run_id,
        fdp: m.fdp,
        power: m.power,
        selected_count: m.selected_count,
        aggregated_bootstraps,
    }
}

/// Repeated KO and AKO runs on a single dataset, each run with its own
/// knockoff randomness.
pub fn stability_experiment(
    config: &SimConfig,
    ako_runs: usize,
    ko_runs: usize,
    ako: &AkoConfig,
) -> Result<ExperimentResult> {
    ako.validate()?;
    let data = generate_dataset(config)?;
    let model = config.oracle_model()?;
    let ako_method = Method::ako(ako.fdr_method);
    let jobs: Vec<(Method, usize)> = (0..ko_runs)
        .map(|r| (Method::Ko, r))
        .chain((0..ako_runs).map(|r| (ako_method, r)))
        .collect();
    let records: Result<Vec<RunRecord>> = jobs
        .into_par_iter()
        .map(|(method, r)| {
            let tag = if method == Method::Ko { TAG_KO } else { TAG_AKO };
            let seed = mix_seed(config.master_seed, tag, r as u64);
            let mut scored = evaluate(&data, &model, ako, seed, &[method])?;
            Ok(record(0, "stability", r, scored.remove(0)))
        })
        .collect();
    Ok(ExperimentResult::from_records(records?))
}

/// Parameter varied across the cells of [`benchmark_grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridAxis {
    Rho(Vec<f64>),
    Sparsity(Vec<f64>),
    Snr(Vec<f64>),
}

impl GridAxis {
    fn values(&self) -> &[f64] {
        match self {
            GridAxis::Rho(v) | GridAxis::Sparsity(v) | GridAxis::Snr(v) => v,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            GridAxis::Rho(_) => "rho",
            GridAxis::Sparsity(_) => "sparsity",
            GridAxis::Snr(_) => "snr",
        }
    }

    fn apply(&self, base: &SimConfig, value: f64) -> SimConfig {
        let mut c = base.clone();
        match self {
            GridAxis::Rho(_) => c.rho = value,
            GridAxis::Sparsity(_) => c.sparsity = value,
            GridAxis::Snr(_) => c.snr = value,
        }
        c
    }
}

/// One parameter varied over a list while the others stay at `base`;
/// every run in every cell gets a fresh dataset.
pub fn benchmark_grid(
    base: &SimConfig,
    axis: &GridAxis,
    runs_per_cell: usize,
    methods: &[Method],
    ako: &AkoConfig,
) -> Result<ExperimentResult> {
    if axis.values().is_empty() {
        return Err(Error::Config("benchmark grid needs at least one value".into()));
    }
    if runs_per_cell == 0 {
        return Err(Error::Config("runs per cell must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(Error::Config("benchmark grid needs at least one method".into()));
    }
    ako.validate()?;
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();

    let cells: Vec<(String, SimConfig, GaussianModel<f64>, CholeskyFactor<f64>)> = axis
        .values()
        .iter()
        .map(|&v| {
            let config = axis.apply(base, v);
            config.validate()?;
            let model = config.oracle_model()?;
            let factor = config.design_factor()?;
            Ok((format!("{}={v}", axis.name()), config, model, factor))
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..runs_per_cell).map(move |r| (c, r)))
        .collect();
    let records: Result<Vec<Vec<RunRecord>>> = jobs
        .into_par_iter()
        .map(|(c, r)| {
            let (label, config, model, factor) = &cells[c];
            let data_seed = mix_seed(mix_seed(base.master_seed, TAG_DATASET, c as u64), TAG_RUN, r as u64);
            let run_config = SimConfig {
                master_seed: data_seed,
                ..config.clone()
            };
            let data = generate_with(&run_config, factor, run_config.draw_support(), data_seed)?;
            let seed = mix_seed(data_seed, TAG_KNOCKOFF, 0);
            Ok(evaluate(&data, model, ako, seed, &methods)?
                .into_iter()
                .map(|s| record(c, label, r, s))
                .collect())
        })
        .collect();
    Ok(ExperimentResult::from_records(records?.into_iter().flatten().collect()))
}

fn paired_seeds(base: &SimConfig, run: usize) -> (u64, u64) {
    (
        mix_seed(base.master_seed, TAG_DATASET, run as u64),
        mix_seed(base.master_seed, TAG_KNOCKOFF, run as u64),
    )
}

/// AKO over the cross product of `b_list` and `gamma_list`. Run `r` uses the
/// same dataset in every cell, and a cell with `B` bootstraps aggregates
/// the first `B` knockoff draws of that run.
pub fn b_gamma_sweep(
    base: &SimConfig,
    b_list: &[usize],
    gamma_list: &[f64],
    runs: usize,
    ako: &AkoConfig,
) -> Result<ExperimentResult> {
    if b_list.is_empty() || gamma_list.is_empty() {
        return Err(Error::Config("B and gamma lists must be nonempty".into()));
    }
    if runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let mut cells = Vec::new();
    for &b in b_list {
        for &gamma in gamma_list {
            let cfg = AkoConfig {
                n_bootstraps: b,
                gamma,
                ..ako.clone()
            };
            cfg.validate()?;
            cells.push((format!("B={b},gamma={gamma}"), cfg));
        }
    }
    base.validate()?;
    let b_max = *b_list.iter().max().expect("nonempty");
    let model = base.oracle_model()?;
    let factor = base.design_factor()?;
    let method = Method::ako(ako.fdr_method);

    let records: Result<Vec<Vec<RunRecord>>> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let (data_seed, knockoff_seed) = paired_seeds(base, r);
            let run_config = SimConfig {
                master_seed: data_seed,
                ..base.clone()
            };
            let data = generate_with(&run_config, &factor, run_config.draw_support(), data_seed)?;
            let boot_config = AkoConfig {
                master_seed: knockoff_seed,
                ..ako.clone()
            };
            let all = run_bootstraps(&data.x, data.y.view(), &model, &boot_config, b_max)?;
            cells
                .iter()
                .enumerate()
                .map(|(c, (label, cfg))| {
                    let prefix: Vec<KnockoffRun<f64>> = all
                        .iter()
                        .filter(|run| run.bootstrap_id <= cfg.n_bootstraps as u64)
                        .cloned()
                        .collect();
                    if prefix.is_empty() {
                        return Err(Error::Pipeline(format!("no bootstrap available for {label}")));
                    }
                    let agg = aggregate_runs(prefix, cfg)?;
                    let used = agg.per_bootstrap.len();
                    let m = fdp_and_power(&agg.selected, &data.support, base.p)?;
                    Ok(record(c, label, r, (method, m, Some(used))))
                })
                .collect()
        })
        .collect();
    Ok(ExperimentResult::from_records(records?.into_iter().flatten().collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanPair {
    /// 0-based feature indices, `first < second`.
    pub first: usize,
    pub second: usize,
    pub rho: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    pub observations: usize,
    pub pairs: Vec<SpearmanPair>,
    /// Sampled pairs left out because one sequence was constant.
    pub constant_pairs: usize,
}

/// Rank correlations between the aggregated p-values of null features
/// across independent datasets that share one support.
///
/// At most `max_pairs` null pairs are sampled.
pub fn spearman_diagnostic(
    config: &SimConfig,
    observations: usize,
    ako: &AkoConfig,
    max_pairs: usize,
) -> Result<SpearmanResult> {
    if observations < 10 {
        return Err(Error::Config(format!(
            "spearman diagnostic needs at least 10 observations, got {observations}"
        )));
    }
    config.validate()?;
    ako.validate()?;
    let support = config.draw_support();
    let model = config.oracle_model()?;
    let factor = config.design_factor()?;

    let pi_bars: Result<Vec<Array1<f64>>> = (0..observations)
        .into_par_iter()
        .map(|i| {
            let data_seed = mix_seed(config.master_seed, TAG_DATASET, i as u64);
            let data = generate_with(config, &factor, support.clone(), data_seed)?;
            let cfg = AkoConfig {
                master_seed: mix_seed(config.master_seed, TAG_KNOCKOFF, i as u64),
                ..ako.clone()
            };
            let runs = run_bootstraps(&data.x, data.y.view(), &model, &cfg, cfg.n_bootstraps)?;
            Ok(aggregate_runs(runs, &cfg)?.pi_bar)
        })
        .collect();
    let pi_bars = pi_bars?;

    let nulls: Vec<usize> = (0..config.p).filter(|j| !support.contains(j)).collect();
    let m = nulls.len();
    let total = m * m.saturating_sub(1) / 2;
    let mut chosen: Vec<usize> = if total <= max_pairs {
        (0..total).collect()
    } else {
        let mut rng = derive_stream(mix_seed(config.master_seed, TAG_PAIRS, 0), 0);
        index::sample(&mut rng, total, max_pairs).into_vec()
    };
    chosen.sort_unstable();

    let mut pairs = Vec::with_capacity(chosen.len());
    let mut constant_pairs = 0;
    for k in chosen {
        let (a, b) = pair_from_index(k, m);
        let (fa, fb) = (nulls[a], nulls[b]);
        let sa: Vec<f64> = pi_bars.iter().map(|v| v[fa]).collect();
        let sb: Vec<f64> = pi_bars.iter().map(|v| v[fb]).collect();
        match spearman(&sa, &sb) {
            Some(rho) => pairs.push(SpearmanPair {
                first: fa,
                second: fb,
                rho,
                p_value: spearman_pvalue(rho, observations),
            }),
            None => constant_pairs += 1,
        }
    }
    Ok(SpearmanResult {
        observations,
        pairs,
        constant_pairs,
    })
}

/// Maps `k ∈ [0, m(m−1)/2)` to the `k`-th pair `(a, b)`, `a < b`, in
/// row-major order of the strict upper triangle.
fn pair_from_index(mut k: usize, m: usize) -> (usize, usize) {
    let mut a = 0;
    loop {
        let row = m - 1 - a;
        if k < row {
            return (a, a + 1 + k);
        }
        k -= row;
        a += 1;
    }
}
