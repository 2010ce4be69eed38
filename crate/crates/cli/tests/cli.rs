use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hpr_cli::formats::{dataset_from_csv, dataset_to_csv, labels_to_text, model_from_json, model_to_json, FittedModel};
use hpr_core::gating::GatingParameters;
use hpr_core::hpr::observed_log_likelihood;
use hpr_core::{HprMixtureModel, ModelStructure, TimeGrid, TimeScale, TimeSeriesDataset};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hprclust")).args(args).env_remove("HPRCLUST_OUTPUT_DIR").output().unwrap()
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: PathBuf) -> String {
    fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--preset", "table1", "--sigma2", "1.0", "--seed", "7", "--output-dir", s(dir)];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn simulate_writes_table1_dataset_reproducibly() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate(a.path(), &[]);
    simulate(b.path(), &[]);
    let csv = read(a.path().join("dataset.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 51);
    assert!(lines.iter().all(|l| l.split(',').count() == 61));
    assert_eq!(read(a.path().join("labels.txt")).lines().count(), 50);
    for f in ["dataset.csv", "labels.txt", "spec.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn simulate_single_series() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), &["--n", "1"]);
    assert_eq!(read(d.path().join("dataset.csv")).lines().count(), 2);
    assert_eq!(read(d.path().join("labels.txt")).lines().count(), 1);
}

#[test]
fn fit_writes_all_outputs_and_reloads_exactly() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), &[]);
    let input = d.path().join("dataset.csv");
    let run_fit = |out: &Path| {
        ok(&["fit", "--input", s(&input), "--K", "2", "--L", "3", "--p", "3", "--restarts", "4", "--seed", "1", "--output-dir", s(out)])
    };
    let a = d.path().join("a");
    let b = d.path().join("b");
    run_fit(&a);
    run_fit(&b);
    let files = ["model.json", "report.json", "partition.csv", "mean_series.csv", "gates.csv", "regimes.csv", "segmentation.csv"];
    for f in files {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs between reruns");
    }
    assert_eq!(read(a.join("partition.csv")).lines().count(), 51);
    assert_eq!(read(a.join("mean_series.csv")).lines().count(), 1 + 2 * 60);
    assert_eq!(read(a.join("gates.csv")).lines().count(), 1 + 2 * 60 * 3);

    let data = dataset_from_csv(&read(input.clone()), &input).unwrap();
    let model_path = a.join("model.json");
    let FittedModel::Hpr(model) = model_from_json(&read(model_path.clone()), &model_path).unwrap() else { panic!("kind") };
    let report: serde_json::Value = serde_json::from_str(&read(a.join("report.json"))).unwrap();
    let stored = report["final_log_likelihood"].as_f64().unwrap();
    let again = observed_log_likelihood(&model, &data);
    assert!((again - stored).abs() <= 1e-12 * stored.abs(), "{again} vs {stored}");
}

#[test]
fn single_cluster_single_regime_converges_immediately() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), &[]);
    let input = d.path().join("dataset.csv");
    ok(&["fit", "--input", s(&input), "--K", "1", "--L", "1", "--p", "2", "--restarts", "2", "--output-dir", s(d.path())]);
    let report: serde_json::Value = serde_json::from_str(&read(d.path().join("report.json"))).unwrap();
    assert!(report["iterations"].as_u64().unwrap() <= 2);
    assert!(report["converged"].as_bool().unwrap());
}

#[test]
fn baseline_fit_and_evaluate() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), &[]);
    let input = d.path().join("dataset.csv");
    let labels = d.path().join("labels.txt");
    let hpr = d.path().join("hpr");
    let reg = d.path().join("reg");
    ok(&["fit", "--input", s(&input), "--restarts", "4", "--output-dir", s(&hpr)]);
    ok(&["fit", "--model", "regmix", "--input", s(&input), "--K", "2", "--p", "10", "--restarts", "4", "--output-dir", s(&reg)]);
    assert!(!reg.join("gates.csv").exists());
    ok(&[
        "evaluate",
        "--input",
        s(&input),
        "--labels",
        s(&labels),
        "--model-file",
        s(&hpr.join("model.json")),
        "--model-file",
        s(&reg.join("model.json")),
        "--output-dir",
        s(d.path()),
    ]);
    let metrics = read(d.path().join("metrics.csv"));
    let rows: Vec<Vec<&str>> = metrics.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][1], "hpr");
    assert_eq!(rows[1][1], "regmix");
    let inertia = |r: &Vec<&str>| r[4].parse::<f64>().unwrap();
    assert!(inertia(&rows[0]) > 0.0 && inertia(&rows[1]) > 0.0);
}

#[test]
fn perfect_model_on_noiseless_data_scores_zero() {
    let d = tempfile::tempdir().unwrap();
    let grid = TimeGrid::index(12).unwrap();
    let scale = TimeScale::unit_interval(&grid);
    let model = HprMixtureModel::new(
        ModelStructure::new(2, 1, 1),
        scale,
        vec![0.5, 0.5],
        vec![GatingParameters::zeros(1); 2],
        vec![vec![vec![0.0, 1.0]], vec![vec![5.0, -1.0]]],
        vec![1.0, 1.0],
    )
    .unwrap();
    let curve = |a: f64, b: f64| grid.times().iter().map(|&t| a + b * scale.apply(t)).collect::<Vec<f64>>();
    let data = TimeSeriesDataset::new(grid.clone(), vec![curve(0.0, 1.0), curve(5.0, -1.0), curve(0.0, 1.0)]).unwrap();
    fs::write(d.path().join("data.csv"), dataset_to_csv(&data)).unwrap();
    fs::write(d.path().join("labels.txt"), labels_to_text(&[1, 0, 1])).unwrap();
    fs::write(d.path().join("model.json"), model_to_json(&FittedModel::Hpr(model))).unwrap();
    let p = |f: &str| d.path().join(f);
    ok(&["evaluate", "--input", s(&p("data.csv")), "--labels", s(&p("labels.txt")), "--model-file", s(&p("model.json")), "--output-dir", s(d.path())]);
    let metrics = read(p("metrics.csv"));
    let row: Vec<&str> = metrics.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[3].parse::<f64>().unwrap(), 0.0);
    assert_eq!(row[4].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn single_cell_selection_has_one_row() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), &[]);
    let input = d.path().join("dataset.csv");
    ok(&["select", "--input", s(&input), "--K-max", "1", "--L-max", "1", "--p-max", "1", "--restarts", "2", "--output-dir", s(d.path())]);
    assert_eq!(read(d.path().join("selection.csv")).lines().count(), 2);
    let winner: serde_json::Value = serde_json::from_str(&read(d.path().join("winner.json"))).unwrap();
    assert_eq!((winner["K"].as_u64(), winner["L"].as_u64(), winner["p"].as_u64()), (Some(1), Some(1), Some(1)));
}

#[test]
fn config_values_yield_to_flags_and_env_sets_the_output_dir() {
    let d = tempfile::tempdir().unwrap();
    simulate(d.path(), &[]);
    let cfg = d.path().join("run.json");
    let out = d.path().join("from_env");
    fs::write(&cfg, format!(r#"{{"input": "{}", "clusters": 3, "segments": 1, "degree": 1, "restarts": 2}}"#, s(&d.path().join("dataset.csv")))).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_hprclust"))
        .args(["fit", "--config", s(&cfg), "--K", "2"])
        .env("HPRCLUST_OUTPUT_DIR", &out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let path = out.join("model.json");
    let model = model_from_json(&read(path.clone()), &path).unwrap();
    assert_eq!(model.clusters(), 2);
    let FittedModel::Hpr(m) = model else { panic!("kind") };
    assert_eq!((m.structure().segments, m.structure().degree), (1, 1));
}

#[test]
fn exit_codes_separate_usage_data_and_numerical_errors() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(run(&["fit", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["fit", "--input", s(&d.path().join("missing.csv"))]).status.code(), Some(3));
    simulate(d.path(), &[]);
    let input = d.path().join("dataset.csv");
    // 60 points in 20 regimes leaves 3 points per segment, too few for a cubic.
    let code = run(&["fit", "--input", s(&input), "--L", "20", "--p", "3", "--output-dir", s(d.path())]).status.code();
    assert_eq!(code, Some(4));
    let code = run(&["evaluate", "--input", s(&input), "--model-file", s(&input), "--output-dir", s(d.path())]).status.code();
    assert_eq!(code, Some(3));
}
