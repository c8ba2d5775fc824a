use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ako_core::simulation::{
    b_gamma_sweep, benchmark_grid, generate_dataset, spearman_diagnostic, stability_experiment,
    ExperimentResult, GridAxis, Method, RunRecord, SimConfig, SpearmanResult,
};
use ako_core::{
    estimate_gaussian, run_ako, run_ko, toeplitz_covariance, AkoConfig, GaussianModel, Shrinkage,
};
use ndarray::Array1;
use serde_json::{json, Value};

use crate::args::{AkoArgs, BenchmarkArgs, Experiment, InferArgs, MethodArg, SimArgs, SimulateArgs};
use crate::matrix_io::{read_matrix, read_vector, write_matrix, write_vector};
use crate::{with_threads, CliError, VERSION};

pub const SCHEMA: u32 = 1;

pub fn sim_config(a: &SimArgs, seed: u64) -> SimConfig {
    SimConfig {
        n: a.n,
        p: a.p,
        rho: a.rho,
        sparsity: a.sparsity,
        snr: a.snr,
        master_seed: seed,
    }
}

pub fn ako_config(a: &AkoArgs, seed: u64) -> AkoConfig {
    AkoConfig {
        n_bootstraps: a.bootstraps,
        gamma: a.gamma,
        alpha: a.fdr,
        fdr_method: a.fdr_method.into(),
        offset_c: a.offset,
        master_seed: seed,
        lambda_policy: a.lambda.0,
        kappa_correct: a.kappa_correct,
        ..AkoConfig::default()
    }
}

fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Io(format!("cannot create directory {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn one_based<'a>(indices: impl IntoIterator<Item = &'a usize>) -> Vec<usize> {
    indices.into_iter().map(|j| j + 1).collect()
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let config = sim_config(&a.sim, a.shared.seed);
    config.validate()?;
    let dir = out_dir(&a.shared.out)?;
    let data = with_threads(a.shared.threads, || generate_dataset(&config))??;
    write_matrix(&dir.join("X.csv"), &data.x)?;
    write_vector(&dir.join("y.csv"), &data.y)?;
    write_vector(&dir.join("beta.csv"), &data.beta_star)?;
    let meta = json!({
        "schema": SCHEMA,
        "version": VERSION,
        "config": config,
        "sigma_noise": data.sigma_noise,
        "support": one_based(&data.support),
    });
    write_text(&dir.join("meta.json"), &pretty(&meta))
}

pub fn infer(a: &InferArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = ako_config(&a.ako, a.shared.seed);
    config.validate()?;
    let x = read_matrix(&a.x)?;
    let y = read_vector(&a.y)?;
    if x.nrows() != y.len() {
        return Err(CliError::Input(format!(
            "{} has {} rows but {} has {} rows",
            a.x.display(),
            x.nrows(),
            a.y.display(),
            y.len()
        )));
    }
    let started = Instant::now();
    let body = with_threads(a.shared.threads, || -> Result<Value, CliError> {
        let model = match a.oracle_cov {
            Some(cov) => GaussianModel::oracle(Array1::zeros(x.ncols()), toeplitz_covariance(cov.rho, x.ncols())?)?,
            None => estimate_gaussian(&x, Shrinkage::Auto)?,
        };
        Ok(match a.method {
            MethodArg::Ako => {
                let res = run_ako(&x, y.view(), &model, &config)?;
                json!({
                    "method": "ako",
                    "selected": one_based(&res.selected),
                    "k_hat": res.k_hat,
                    "bootstraps_used": res.per_bootstrap.len(),
                    "bootstraps_converged": res.per_bootstrap.iter().filter(|r| r.converged).count(),
                    "pi_bar": res.pi_bar.to_vec(),
                })
            }
            MethodArg::Ko => {
                let res = run_ko(&x, y.view(), &model, &config)?;
                json!({
                    "method": "ko",
                    "selected": one_based(&res.selected),
                    "threshold": res.threshold.is_finite().then_some(res.threshold),
                    "w": res.run.w.to_vec(),
                })
            }
        })
    })??;
    let runtime_ms = started.elapsed().as_millis() as u64;

    let mut report = json!({
        "schema": SCHEMA,
        "version": VERSION,
        "alpha": config.alpha,
        "config": {
            "bootstraps": config.n_bootstraps,
            "gamma": config.gamma,
            "offset_c": config.offset_c,
            "fdr_method": config.fdr_method,
            "seed": config.master_seed,
            "lambda_policy": a.ako.lambda.to_string(),
            "kappa_correct": config.kappa_correct,
            "oracle_cov": a.oracle_cov.map(|c| c.to_string()),
        },
        "n": x.nrows(),
        "p": x.ncols(),
    });
    let fields = report.as_object_mut().expect("object");
    for (k, v) in body.as_object().expect("object") {
        fields.insert(k.clone(), v.clone());
    }
    fields.insert("runtime_ms".into(), json!(runtime_ms));
    let text = pretty(&report);
    match &a.shared.out {
        Some(path) => write_text(path, &text),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(e.to_string())),
    }
}

fn experiment_name(e: Experiment) -> &'static str {
    match e {
        Experiment::Stability => "stability",
        Experiment::Grid => "grid",
        Experiment::Bgamma => "bgamma",
        Experiment::Spearman => "spearman",
    }
}

/// Long-format CSV of per-run records.
pub fn records_csv(experiment: &str, records: &[RunRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["experiment", "cell", "method", "run", "fdp", "power", "selected_count"])
        .expect("in-memory write");
    for r in records {
        w.write_record([
            experiment.to_string(),
            r.cell.clone(),
            r.method.to_string(),
            r.run_id.to_string(),
            r.fdp.to_string(),
            r.power.to_string(),
            r.selected_count.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn spearman_csv(res: &SpearmanResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["experiment", "first", "second", "rho", "p_value"])
        .expect("in-memory write");
    for pair in &res.pairs {
        w.write_record([
            "spearman".to_string(),
            (pair.first + 1).to_string(),
            (pair.second + 1).to_string(),
            pair.rho.to_string(),
            pair.p_value.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    Some(if xs.len() % 2 == 1 { xs[m] } else { (xs[m - 1] + xs[m]) / 2.0 })
}

fn grid_axis(a: &BenchmarkArgs) -> Result<GridAxis, CliError> {
    match (&a.rho_list, &a.sparsity_list, &a.snr_list) {
        (Some(v), None, None) => Ok(GridAxis::Rho(v.clone())),
        (None, Some(v), None) => Ok(GridAxis::Sparsity(v.clone())),
        (None, None, Some(v)) => Ok(GridAxis::Snr(v.clone())),
        _ => Err(CliError::Usage(
            "grid needs exactly one of --rho-list, --sparsity-list, --snr-list".into(),
        )),
    }
}

pub fn benchmark(a: &BenchmarkArgs) -> Result<(), CliError> {
    if a.runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let sim = sim_config(&a.sim, a.shared.seed);
    let ako = ako_config(&a.ako, a.shared.seed);
    sim.validate()?;
    ako.validate()?;
    let name = experiment_name(a.experiment);
    let mut summary = json!({
        "schema": SCHEMA,
        "version": VERSION,
        "experiment": name,
        "sim_config": sim,
        "ako_config": ako,
    });

    let records_text = match a.experiment {
        Experiment::Spearman => {
            let res = with_threads(a.shared.threads, || {
                spearman_diagnostic(&sim, a.observations, &ako, a.pairs)
            })??;
            let abs: Vec<f64> = res.pairs.iter().map(|p| p.rho.abs()).collect();
            let fields = summary.as_object_mut().expect("object");
            fields.insert("observations".into(), json!(res.observations));
            fields.insert("pairs".into(), json!(res.pairs.len()));
            fields.insert("constant_pairs".into(), json!(res.constant_pairs));
            fields.insert("median_abs_rho".into(), json!(median(abs)));
            fields.insert(
                "fraction_p_below_0_05".into(),
                json!(res.pairs.iter().filter(|p| p.p_value < 0.05).count() as f64
                    / res.pairs.len().max(1) as f64),
            );
            spearman_csv(&res)
        }
        experiment => {
            let res: ExperimentResult = with_threads(a.shared.threads, || match experiment {
                Experiment::Stability => {
                    if a.ako_runs + a.ko_runs == 0 {
                        return Err(CliError::Usage(
                            "--ako-runs and --ko-runs cannot both be 0".into(),
                        ));
                    }
                    Ok(stability_experiment(&sim, a.ako_runs, a.ko_runs, &ako)?)
                }
                Experiment::Grid => {
                    let methods: Vec<Method> = a
                        .methods
                        .iter()
                        .map(|m| match m {
                            MethodArg::Ako => Method::ako(ako.fdr_method),
                            MethodArg::Ko => Method::Ko,
                        })
                        .collect();
                    Ok(benchmark_grid(&sim, &grid_axis(a)?, a.runs, &methods, &ako)?)
                }
                _ => Ok(b_gamma_sweep(&sim, &a.b_list, &a.gamma_list, a.runs, &ako)?),
            })??;
            summary
                .as_object_mut()
                .expect("object")
                .insert("cells".into(), json!(res.summary));
            records_csv(name, &res.records)
        }
    };
    let dir = out_dir(&a.shared.out)?;
    write_text(&dir.join(format!("{name}_records.csv")), &records_text)?;
    write_text(&dir.join(format!("{name}_summary.json")), &pretty(&summary))
}
