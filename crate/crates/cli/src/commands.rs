//! The four subcommands. Each reads its inputs, runs the core routines and
//! writes plain-text outputs into the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hpr_core::hpr::{e_step, hpr_fit_em, map_partition, mean_series, restart_seed, segment};
use hpr_core::metrics::{intra_cluster_inertia, misclassification_pct};
use hpr_core::reg_mixture::{regmix_fit_em, regmix_mean_series, regmix_posteriors};
use hpr_core::selection::{
    free_parameter_count, regmix_free_parameter_count, select, ModelKind, SelectionGrid, SelectionReport,
};
use hpr_core::synthetic::{generate, table1_spec, GenerativeSpec, RegimeSampling};
use hpr_core::{EmFitReport, FitOptions, ModelStructure, TimeSeriesDataset};
use serde_json::json;

use crate::config::{self, ConfigFile, EvaluateArgs, FitArgs, FitSettings, ModelChoice, SelectArgs, SimulateArgs};
use crate::error::CliError;
use crate::formats::{dataset_from_csv, dataset_to_csv, fmt_f64, labels_from_text, labels_to_text, model_from_json, model_to_json, read_text, write_text, FittedModel};

fn load_dataset(path: Option<&PathBuf>) -> Result<TimeSeriesDataset, CliError> {
    let path = path.ok_or_else(|| CliError::Usage("--input is required".into()))?;
    dataset_from_csv(&read_text(path)?, path)
}

fn json_text(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn sim_spec(sim: &config::SimulationArgs, cfg: &ConfigFile, seed: u64) -> Result<GenerativeSpec, CliError> {
    let preset = sim.preset.or(cfg.preset);
    let mut spec = match (&cfg.generative, preset) {
        (Some(g), None) => g.clone(),
        _ => table1_spec(sim.sigma2.or(cfg.sigma2).unwrap_or(1.0))?,
    };
    if let Some(n) = sim.n.or(cfg.n) {
        spec = spec.with_n(n);
    }
    if let Some(s) = sim.sampling.or(cfg.sampling) {
        spec = spec.with_sampling(config::sampling(Some(s)));
    }
    spec.validate()?;
    Ok(spec.with_seed(seed))
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    let out = config::output_dir(&args.common, &cfg);
    let seed = args.common.seed.or(cfg.seed).unwrap_or(0);
    let spec = sim_spec(&args.sim, &cfg, seed)?;
    let generated = generate(&spec)?;
    write_text(&out.join("dataset.csv"), &dataset_to_csv(&generated.dataset))?;
    write_text(&out.join("labels.txt"), &labels_to_text(&generated.labels))?;
    let spec_json = serde_json::to_value(&spec).expect("spec serializes");
    write_text(&out.join("spec.json"), &json_text(&spec_json))?;
    if let Some(hidden) = &generated.hidden {
        let mut text = String::new();
        for row in &hidden.labels {
            let cells: Vec<String> = row.iter().map(|l| (l + 1).to_string()).collect();
            let _ = writeln!(text, "{}", cells.join(","));
        }
        write_text(&out.join("regimes.txt"), &text)?;
    }
    Ok(())
}

/// Fits one model family with the given structure.
pub fn fit_model(
    data: &TimeSeriesDataset,
    model: ModelChoice,
    structure: &ModelStructure,
    options: &FitOptions,
) -> Result<(FittedModel, EmFitReport), CliError> {
    Ok(match model {
        ModelChoice::Hpr => {
            let (m, r) = hpr_fit_em(data, structure, options)?;
            (FittedModel::Hpr(m), r)
        }
        ModelChoice::Regmix => {
            let (m, r) = regmix_fit_em(data, structure.clusters, structure.degree, options)?;
            (FittedModel::Regmix(m), r)
        }
    })
}

/// Posterior rows and cluster mean curves.
pub type PartitionAndMeans = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// MAP partition (0-based) and cluster mean curves of a model on a dataset.
pub fn partition_and_means(model: &FittedModel, data: &TimeSeriesDataset) -> Result<PartitionAndMeans, CliError> {
    match model {
        FittedModel::Hpr(m) => {
            let (post, _) = e_step(m, data);
            let means = (0..m.structure().clusters).map(|k| mean_series(m, k, data.grid())).collect();
            Ok((post.r_matrix(), means))
        }
        FittedModel::Regmix(m) => {
            let r = regmix_posteriors(m, data)?;
            let means = (0..m.clusters()).map(|k| regmix_mean_series(m, k, data)).collect::<Result<_, _>>()?;
            Ok((r, means))
        }
    }
}

/// Misclassification percentage and intra-cluster inertia of a model's MAP
/// partition against reference labels (0-based).
pub fn score(model: &FittedModel, data: &TimeSeriesDataset, labels: &[usize]) -> Result<(f64, f64), CliError> {
    if labels.len() != data.n() {
        return Err(hpr_core::DataError::DimensionMismatch { expected: data.n(), found: labels.len() }.into());
    }
    let (r, means) = partition_and_means(model, data)?;
    let partition = map_partition(&r);
    let clusters = model.clusters().max(labels.iter().max().map_or(0, |l| l + 1));
    let mis = misclassification_pct(labels, &partition, clusters)?;
    let inertia = intra_cluster_inertia(data, &partition, &means)?;
    Ok((mis, inertia))
}

fn structure_from(settings: &FitSettings, k: usize, l: usize, p: usize) -> ModelStructure {
    let l = if settings.model == ModelChoice::Regmix { 1 } else { l };
    ModelStructure::new(k, l, p).with_variance_mode(settings.variance_mode).with_gating_mode(settings.gating_mode)
}

fn nu_of(model: &FittedModel) -> usize {
    match model {
        FittedModel::Hpr(m) => free_parameter_count(m.structure()),
        FittedModel::Regmix(m) => regmix_free_parameter_count(m.clusters(), m.degree()),
    }
}

fn long_row(text: &mut String, k: usize, t: f64, quantity: &str, value: f64) {
    let _ = writeln!(text, "{},{},{},{}", k + 1, fmt_f64(t), quantity, fmt_f64(value));
}

/// Writes `segmentation.csv` and returns warnings for non-contiguous regimes.
fn segmentation_text(model: &hpr_core::HprMixtureModel, data: &TimeSeriesDataset) -> (String, Vec<String>) {
    let grid = data.grid();
    let scale = model.time_scale();
    let mut text = String::from("cluster,segment,regime,start_index,end_index,start_t,end_t\n");
    let mut warnings = Vec::new();
    for k in 0..model.structure().clusters {
        if let Err(e) = segment(model, k, grid) {
            warnings.push(e.to_string());
        }
        let labels: Vec<usize> = grid.times().iter().map(|&t| model.gating(k).dominant_regime(scale.apply(t))).collect();
        let mut start = 0;
        let mut order = 0;
        for j in 1..=labels.len() {
            if j == labels.len() || labels[j] != labels[start] {
                order += 1;
                let _ = writeln!(
                    text,
                    "{},{},{},{},{},{},{}",
                    k + 1,
                    order,
                    labels[start] + 1,
                    start + 1,
                    j,
                    fmt_f64(grid.times()[start]),
                    fmt_f64(grid.times()[j - 1])
                );
                start = j;
            }
        }
    }
    (text, warnings)
}

fn report_json(model: &FittedModel, report: &EmFitReport, data: &TimeSeriesDataset, extra_warnings: &[String]) -> serde_json::Value {
    let nu = nu_of(model);
    let mut warnings = report.warnings.clone();
    warnings.extend_from_slice(extra_warnings);
    json!({
        "final_log_likelihood": report.final_log_likelihood,
        "free_parameters": nu,
        "bic": hpr_core::selection::bic(report.final_log_likelihood, nu, data.n()),
        "iterations": report.iterations,
        "converged": report.converged,
        "winning_restart": report.restart_index + 1,
        "loglik_trace": report.loglik_trace,
        "restarts": report.restarts,
        "warnings": warnings,
    })
}

pub fn fit(args: &FitArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    let out = config::output_dir(&args.common, &cfg);
    let settings = config::fit_settings(&args.fit, &args.common, &cfg)?;
    let data = load_dataset(args.input.as_ref().or(cfg.input.as_ref()))?;
    let k = args.clusters.or(cfg.clusters).unwrap_or(2);
    let l = args.segments.or(cfg.segments).unwrap_or(3);
    let p = args.degree.or(cfg.degree).unwrap_or(3);
    let structure = structure_from(&settings, k, l, p);
    let (model, report) = fit_model(&data, settings.model, &structure, &settings.options)?;

    let (r, means) = partition_and_means(&model, &data)?;
    let partition = map_partition(&r);
    let mut part = String::from("series,cluster");
    for k in 0..model.clusters() {
        let _ = write!(part, ",posterior_{}", k + 1);
    }
    part.push('\n');
    for (i, row) in r.iter().enumerate() {
        let _ = write!(part, "{},{}", i + 1, partition[i] + 1);
        for v in row {
            let _ = write!(part, ",{}", fmt_f64(*v));
        }
        part.push('\n');
    }

    let header = "cluster,t,quantity,value\n";
    let mut mean_text = String::from(header);
    for (k, curve) in means.iter().enumerate() {
        for (&t, &v) in data.grid().times().iter().zip(curve) {
            long_row(&mut mean_text, k, t, "mean", v);
        }
    }

    let mut extra = Vec::new();
    if let FittedModel::Hpr(m) = &model {
        let scale = m.time_scale();
        let (mut gates, mut regimes) = (String::from(header), String::from(header));
        for k in 0..m.structure().clusters {
            for &t in data.grid().times() {
                let u = scale.apply(t);
                for (l, pi) in m.gating(k).logistic_proportions(u).into_iter().enumerate() {
                    long_row(&mut gates, k, t, &format!("gate_{}", l + 1), pi);
                    let v = hpr_core::design::eval_polynomial(m.coefficients(k, l), u);
                    long_row(&mut regimes, k, t, &format!("regime_{}", l + 1), v);
                }
            }
        }
        let (seg, warnings) = segmentation_text(m, &data);
        extra = warnings;
        write_text(&out.join("gates.csv"), &gates)?;
        write_text(&out.join("regimes.csv"), &regimes)?;
        write_text(&out.join("segmentation.csv"), &seg)?;
    }
    for w in report.warnings.iter().chain(&extra) {
        eprintln!("warning: {w}");
    }
    write_text(&out.join("model.json"), &model_to_json(&model))?;
    write_text(&out.join("report.json"), &json_text(&report_json(&model, &report, &data, &extra)))?;
    write_text(&out.join("partition.csv"), &part)?;
    write_text(&out.join("mean_series.csv"), &mean_text)?;
    Ok(())
}

/// Ranges and controls for a selection run after merging flags and config.
fn selection_grid(args: &SelectArgs, cfg: &ConfigFile, settings: &FitSettings) -> SelectionGrid {
    let k_max = args.k_max.or(cfg.k_max).unwrap_or(4);
    let l_max = args.l_max.or(cfg.l_max).unwrap_or(4);
    let p_max = args.p_max.or(cfg.p_max).unwrap_or(4);
    let p_min = args.p_min.or(cfg.p_min).unwrap_or(1);
    let mut grid = match settings.model {
        ModelChoice::Hpr => SelectionGrid::hpr((1, k_max), (1, l_max), (p_min, p_max), settings.options),
        ModelChoice::Regmix => SelectionGrid::regmix((1, k_max), (p_min, p_max), settings.options),
    };
    grid.variance_mode = settings.variance_mode;
    grid.gating_mode = settings.gating_mode;
    grid.penalty = config::penalty(args.penalty.or(cfg.penalty));
    grid
}

fn table_text(report: &SelectionReport) -> String {
    let mut buf = Vec::new();
    report.write_table(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("table is ASCII")
}

fn winner_json(report: &SelectionReport) -> serde_json::Value {
    let c = report.winning_cell();
    json!({
        "model": match report.kind { ModelKind::Hpr => "hpr", ModelKind::Regmix => "regmix" },
        "K": c.structure.clusters,
        "L": c.structure.segments,
        "p": c.structure.degree,
        "log_likelihood": c.log_likelihood,
        "free_parameters": c.free_parameters,
        "bic": c.bic,
        "converged": c.converged,
        "warnings": report.warnings,
    })
}

/// Winning `(K, L, p)` of each simulated replicate.
pub fn selection_replicates(spec: &GenerativeSpec, grid: &SelectionGrid, replicates: usize) -> Result<Vec<SelectionReport>, CliError> {
    (0..replicates)
        .map(|r| {
            let data = generate(&spec.clone().with_seed(restart_seed(spec.seed, r)))?.dataset;
            Ok(select(&data, grid)?)
        })
        .collect()
}

pub fn select_cmd(args: &SelectArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    let out = config::output_dir(&args.common, &cfg);
    let settings = config::fit_settings(&args.fit, &args.common, &cfg)?;
    let grid = selection_grid(args, &cfg, &settings);
    match args.replicates.or(cfg.replicates) {
        None => {
            let data = load_dataset(args.input.as_ref().or(cfg.input.as_ref()))?;
            let report = select(&data, &grid)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            write_text(&out.join("selection.csv"), &table_text(&report))?;
            write_text(&out.join("winner.json"), &json_text(&winner_json(&report)))?;
        }
        Some(0) => return Err(CliError::Usage("--replicates must be at least 1".into())),
        Some(reps) => {
            let spec = sim_spec(&args.sim, &cfg, settings.options.seed)?;
            let reports = selection_replicates(&spec, &grid, reps)?;
            let mut winners = String::from("replicate,K,L,p,bic\n");
            let mut counts: Vec<(ModelStructure, usize)> = Vec::new();
            for (r, rep) in reports.iter().enumerate() {
                let c = rep.winning_cell();
                let s = c.structure;
                let _ = writeln!(winners, "{},{},{},{},{}", r + 1, s.clusters, s.segments, s.degree, c.bic.map(fmt_f64).unwrap_or_default());
                match counts.iter_mut().find(|(t, _)| *t == s) {
                    Some((_, n)) => *n += 1,
                    None => counts.push((s, 1)),
                }
            }
            counts.sort_by(|a, b| b.1.cmp(&a.1).then((a.0.clusters, a.0.segments, a.0.degree).cmp(&(b.0.clusters, b.0.segments, b.0.degree))));
            let mut rates = String::from("K,L,p,selected,percent\n");
            for (s, n) in &counts {
                let _ = writeln!(rates, "{},{},{},{},{}", s.clusters, s.segments, s.degree, n, fmt_f64(100.0 * *n as f64 / reps as f64));
            }
            write_text(&out.join("replicate_winners.csv"), &winners)?;
            write_text(&out.join("selection_rates.csv"), &rates)?;
        }
    }
    Ok(())
}

/// One row of a noise sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sigma2: f64,
    pub replicate: usize,
    pub method: &'static str,
    pub misclassification_pct: f64,
    pub inertia: f64,
}

/// Simulates `replicates` datasets per noise level from the two-cluster
/// design and scores the proposed model against the regression mixture.
pub fn noise_sweep(
    levels: &[f64],
    replicates: usize,
    proposed: &ModelStructure,
    baseline_degree: usize,
    options: &FitOptions,
    sampling: RegimeSampling,
) -> Result<Vec<SweepRow>, CliError> {
    let mut rows = Vec::new();
    for (s, &sigma2) in levels.iter().enumerate() {
        for r in 0..replicates {
            let spec = table1_spec(sigma2)?.with_sampling(sampling).with_seed(restart_seed(options.seed, s * replicates + r));
            let generated = generate(&spec)?;
            let baseline = ModelStructure::new(proposed.clusters, 1, baseline_degree);
            for (method, choice, structure) in [("hpr", ModelChoice::Hpr, proposed), ("regmix", ModelChoice::Regmix, &baseline)] {
                let (model, _) = fit_model(&generated.dataset, choice, structure, options)?;
                let (mis, inertia) = score(&model, &generated.dataset, &generated.labels)?;
                rows.push(SweepRow { sigma2, replicate: r, method, misclassification_pct: mis, inertia });
            }
        }
    }
    Ok(rows)
}

fn labels_for(path: Option<&Path>) -> Result<Vec<usize>, CliError> {
    let path = path.ok_or(CliError::MissingLabels)?;
    labels_from_text(&read_text(path)?, path)
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(args.common.config.as_deref())?;
    let out = config::output_dir(&args.common, &cfg);
    if let Some(levels) = args.sweep.clone().or_else(|| cfg.sweep.clone()) {
        if levels.is_empty() || levels.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(CliError::Usage("--sweep needs positive noise variances".into()));
        }
        let settings = config::fit_settings(&args.fit, &args.common, &cfg)?;
        let reps = args.replicates.or(cfg.replicates).unwrap_or(1);
        if reps == 0 {
            return Err(CliError::Usage("--replicates must be at least 1".into()));
        }
        let k = args.clusters.or(cfg.clusters).unwrap_or(2);
        let l = args.segments.or(cfg.segments).unwrap_or(3);
        let p = args.degree.or(cfg.degree).unwrap_or(3);
        let baseline_p = args.baseline_degree.or(cfg.baseline_degree).unwrap_or(10);
        let proposed = structure_from(&FitSettings { model: ModelChoice::Hpr, ..settings }, k, l, p);
        let sampling = config::sampling(args.sim.sampling.or(cfg.sampling));
        let rows = noise_sweep(&levels, reps, &proposed, baseline_p, &settings.options, sampling)?;
        let mut text = String::from("sigma2,replicate,method,misclassification_pct,inertia\n");
        for row in &rows {
            let _ = writeln!(text, "{},{},{},{},{}", fmt_f64(row.sigma2), row.replicate + 1, row.method, fmt_f64(row.misclassification_pct), fmt_f64(row.inertia));
        }
        let mut summary = String::from("sigma2,method,mean_misclassification_pct,mean_inertia\n");
        for &sigma2 in &levels {
            for method in ["hpr", "regmix"] {
                let sel: Vec<&SweepRow> = rows.iter().filter(|r| r.sigma2 == sigma2 && r.method == method).collect();
                let mean = |f: fn(&SweepRow) -> f64| sel.iter().map(|r| f(r)).sum::<f64>() / sel.len() as f64;
                let _ = writeln!(summary, "{},{},{},{}", fmt_f64(sigma2), method, fmt_f64(mean(|r| r.misclassification_pct)), fmt_f64(mean(|r| r.inertia)));
            }
        }
        write_text(&out.join("sweep.csv"), &text)?;
        write_text(&out.join("sweep_summary.csv"), &summary)?;
        return Ok(());
    }

    let data = load_dataset(args.input.as_ref().or(cfg.input.as_ref()))?;
    let labels = labels_for(args.labels.as_deref().or(cfg.labels.as_deref()))?;
    let files: Vec<PathBuf> = if args.model_files.is_empty() { cfg.model_files.clone() } else { args.model_files.clone() };
    if files.is_empty() {
        return Err(CliError::Usage("at least one --model-file is required".into()));
    }
    let mut text = String::from("model_file,model,K,misclassification_pct,inertia\n");
    for path in &files {
        let model = model_from_json(&read_text(path)?, path)?;
        let (mis, inertia) = score(&model, &data, &labels)?;
        let kind = match model {
            FittedModel::Hpr(_) => "hpr",
            FittedModel::Regmix(_) => "regmix",
        };
        let _ = writeln!(text, "{},{},{},{},{}", path.display(), kind, model.clusters(), fmt_f64(mis), fmt_f64(inertia));
    }
    write_text(&out.join("metrics.csv"), &text)?;
    Ok(())
}

/// Applies `--threads` (flag or config) to the global worker pool.
pub fn configure_threads(common: &config::CommonArgs) -> Result<(), CliError> {
    let cfg_threads = match &common.config {
        Some(p) => ConfigFile::load(Some(p))?.threads,
        None => None,
    };
    if let Some(n) = common.threads.or(cfg_threads) {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

