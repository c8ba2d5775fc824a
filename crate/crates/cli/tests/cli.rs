use std::path::Path;
use std::process::{Command, Output};

use ako_core::simulation::{generate_dataset, SimConfig};
use serde_json::Value;

fn ako(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ako"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn simulate_into(dir: &Path, extra: &[&str]) {
    let out = dir.to_str().unwrap();
    let mut args = vec!["simulate", "--out", out];
    args.extend_from_slice(extra);
    let o = ako(&args);
    assert!(o.status.success(), "{}", stderr(&o));
}

fn small_sim() -> Vec<&'static str> {
    vec!["--n", "120", "--p", "40", "--rho", "0.3", "--sparsity", "0.25", "--snr", "6", "--seed", "5"]
}

fn report(o: &Output) -> Value {
    assert!(o.status.success(), "{}", stderr(o));
    serde_json::from_slice(&o.stdout).expect("JSON report")
}

#[test]
fn simulate_is_byte_identical_across_calls() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate_into(a.path(), &small_sim());
    simulate_into(b.path(), &small_sim());
    for f in ["X.csv", "y.csv", "beta.csv", "meta.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let meta: Value = serde_json::from_slice(&std::fs::read(a.path().join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["schema"], 1);
    assert_eq!(meta["config"]["master_seed"], 5);
    assert!(meta["sigma_noise"].as_f64().unwrap() > 0.0);
    assert_eq!(meta["support"].as_array().unwrap().len(), 10);
}

#[test]
fn simulated_files_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), &small_sim());
    let data = generate_dataset(&SimConfig {
        n: 120,
        p: 40,
        rho: 0.3,
        sparsity: 0.25,
        snr: 6.0,
        master_seed: 5,
    })
    .unwrap();
    let x = ako_cli::matrix_io::read_matrix(&dir.path().join("X.csv")).unwrap();
    let y = ako_cli::matrix_io::read_vector(&dir.path().join("y.csv")).unwrap();
    let beta = ako_cli::matrix_io::read_vector(&dir.path().join("beta.csv")).unwrap();
    assert_eq!(x, data.x);
    assert_eq!(y, data.y);
    assert_eq!(beta, data.beta_star);
}

#[test]
fn single_bootstrap_ako_matches_ko_at_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), &small_sim());
    let x = dir.path().join("X.csv");
    let y = dir.path().join("y.csv");
    let (x, y) = (x.to_str().unwrap(), y.to_str().unwrap());
    let mut nonempty = 0;
    for alpha in ["0.1", "0.2", "0.3"] {
        let common = ["infer", "--x", x, "--y", y, "--fdr", alpha, "--seed", "11", "--oracle-cov", "toeplitz:0.3"];
        let mut a = common.to_vec();
        a.extend(["--method", "ako", "--bootstraps", "1", "--gamma", "1.0", "--fdr-method", "bh"]);
        let mut k = common.to_vec();
        k.extend(["--method", "ko"]);
        let (ra, rk) = (report(&ako(&a)), report(&ako(&k)));
        assert_eq!(ra["selected"], rk["selected"], "alpha {alpha}");
        assert_eq!(ra["method"], "ako");
        assert!(rk["w"].as_array().unwrap().len() == 40);
        nonempty += usize::from(!rk["selected"].as_array().unwrap().is_empty());
    }
    assert!(nonempty > 0);
}

#[test]
fn reports_replay_from_their_echoed_config() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), &small_sim());
    let x = dir.path().join("X.csv");
    let y = dir.path().join("y.csv");
    let args = [
        "infer", "--x", x.to_str().unwrap(), "--y", y.to_str().unwrap(), "--bootstraps", "5",
        "--gamma", "0.5", "--fdr-method", "by", "--lambda", "fixed:0.3", "--seed", "3", "--offset", "0.5",
    ];
    let mut first = report(&ako(&args));
    let cfg = first["config"].clone();
    assert_eq!(cfg["bootstraps"], 5);
    assert_eq!(cfg["fdr_method"], "by");
    assert_eq!(cfg["lambda_policy"], "fixed:0.3");
    assert_eq!(cfg["offset_c"], 0.5);
    assert_eq!(cfg["oracle_cov"], Value::Null);

    let replay_args = [
        "infer".to_string(),
        "--x".into(), x.to_str().unwrap().into(),
        "--y".into(), y.to_str().unwrap().into(),
        "--fdr".into(), first["alpha"].to_string(),
        "--bootstraps".into(), cfg["bootstraps"].to_string(),
        "--gamma".into(), cfg["gamma"].to_string(),
        "--offset".into(), cfg["offset_c"].to_string(),
        "--fdr-method".into(), cfg["fdr_method"].as_str().unwrap().into(),
        "--lambda".into(), cfg["lambda_policy"].as_str().unwrap().into(),
        "--seed".into(), cfg["seed"].to_string(),
    ];
    let refs: Vec<&str> = replay_args.iter().map(String::as_str).collect();
    let mut second = report(&ako(&refs));
    first.as_object_mut().unwrap().remove("runtime_ms");
    second.as_object_mut().unwrap().remove("runtime_ms");
    assert_eq!(first, second);
    let sel: Vec<u64> = first["selected"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert!(sel.windows(2).all(|w| w[0] < w[1]));
    assert!(sel.iter().all(|&j| (1..=40).contains(&j)));
}

#[test]
fn report_goes_to_out_path_when_given() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), &small_sim());
    let out = dir.path().join("report.json");
    let o = ako(&[
        "infer", "--method", "ko",
        "--x", dir.path().join("X.csv").to_str().unwrap(),
        "--y", dir.path().join("y.csv").to_str().unwrap(),
        "--out", out.to_str().unwrap(), "--threads", "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let r: Value = serde_json::from_slice(&std::fs::read(out).unwrap()).unwrap();
    assert_eq!(r["schema"], 1);
    assert_eq!(r["method"], "ko");
}

#[test]
fn input_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), &small_sim());
    let x = dir.path().join("X.csv");
    let y = dir.path().join("y.csv");
    let short = dir.path().join("short.csv");
    let text = std::fs::read_to_string(&y).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    std::fs::write(&short, lines[..lines.len() - 1].join("\n")).unwrap();
    let o = ako(&["infer", "--x", x.to_str().unwrap(), "--y", short.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("120 rows") && stderr(&o).contains("119 rows"), "{}", stderr(&o));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2\n3,oops\n").unwrap();
    let o = ako(&["infer", "--x", bad.to_str().unwrap(), "--y", y.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 2, column 2"), "{}", stderr(&o));

    std::fs::write(&bad, "1,2\n3\n").unwrap();
    let o = ako(&["infer", "--x", bad.to_str().unwrap(), "--y", y.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 2 has 1 columns"), "{}", stderr(&o));

    for flags in [["--gamma", "0"], ["--gamma", "1.5"], ["--bootstraps", "0"], ["--fdr", "1.0"]] {
        let mut args = vec!["infer", "--x", x.to_str().unwrap(), "--y", y.to_str().unwrap()];
        args.extend(flags);
        assert_eq!(ako(&args).status.code(), Some(2), "{flags:?}");
    }
    assert_eq!(ako(&["infer", "--x", x.to_str().unwrap(), "--y", y.to_str().unwrap(), "--lambda", "auto"]).status.code(), Some(2));
    assert_eq!(ako(&["simulate", "--sparsity", "0"]).status.code(), Some(2));
    assert_eq!(ako(&["benchmark", "--experiment", "nonsense"]).status.code(), Some(2));
    assert_eq!(ako(&["benchmark", "--experiment", "grid", "--runs", "0", "--rho-list", "0.5"]).status.code(), Some(2));
    assert_eq!(ako(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn io_errors_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let target = blocker.join("sub");
    let o = ako(&["simulate", "--n", "10", "--p", "5", "--sparsity", "0.4", "--out", target.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = ako(&["infer", "--x", "/nonexistent/X.csv", "--y", "/nonexistent/y.csv"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn benchmark_records_do_not_depend_on_threads() {
    let runs = |threads: &str| {
        let dir = tempfile::tempdir().unwrap();
        let o = ako(&[
            "benchmark", "--experiment", "stability", "--n", "80", "--p", "30", "--sparsity", "0.2",
            "--ako-runs", "3", "--ko-runs", "6", "--bootstraps", "4", "--seed", "9",
            "--threads", threads, "--out", dir.path().to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        (
            std::fs::read_to_string(dir.path().join("stability_records.csv")).unwrap(),
            std::fs::read_to_string(dir.path().join("stability_summary.json")).unwrap(),
        )
    };
    let (one, summary) = runs("1");
    assert_eq!(one, runs("4").0);
    assert_eq!(one.lines().next().unwrap(), "experiment,cell,method,run,fdp,power,selected_count");
    assert_eq!(one.lines().count(), 1 + 9);
    let s: Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(s["cells"].as_array().unwrap().len(), 2);
}

#[test]
fn benchmark_grid_bgamma_and_spearman_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let base = ["--n", "80", "--p", "30", "--sparsity", "0.2", "--bootstraps", "3", "--lambda", "fixed:0.5", "--out", out];
    let mut grid = vec!["benchmark", "--experiment", "grid", "--snr-list", "2,5", "--runs", "2", "--methods", "ko"];
    grid.extend(base);
    assert!(ako(&grid).status.success());
    let csv = std::fs::read_to_string(dir.path().join("grid_records.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(csv.lines().skip(1).all(|l| l.contains(",ko,")));

    let mut sweep = vec!["benchmark", "--experiment", "bgamma", "--b-list", "1,3", "--gamma-list", "0.5,1.0", "--runs", "2"];
    sweep.extend(base);
    assert!(ako(&sweep).status.success());
    let csv = std::fs::read_to_string(dir.path().join("bgamma_records.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 8);
    assert!(csv.contains("\"B=3,gamma=0.5\""));

    let mut sp = vec!["benchmark", "--experiment", "spearman", "--observations", "10", "--pairs", "20"];
    sp.extend(base);
    let o = ako(&sp);
    assert!(o.status.success(), "{}", stderr(&o));
    let s: Value = serde_json::from_slice(&std::fs::read(dir.path().join("spearman_summary.json")).unwrap()).unwrap();
    assert_eq!(s["observations"], 10);

    let o = ako(&["benchmark", "--experiment", "grid", "--runs", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn version_command() {
    let o = ako(&["version"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), format!("ako {}", env!("CARGO_PKG_VERSION")));
}
