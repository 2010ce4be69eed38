//! Baseline mixture of polynomial regressions: each cluster is a single
//! polynomial curve with isotropic Gaussian noise over the whole series.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::design::DesignMatrix;
use crate::error::FitError;
use crate::gating::GatingParameters;
use crate::hpr::best_of;
use crate::stats::{log_isotropic_normal, log_sum_exp, softmax_in_place};
use crate::types::{
    EmFitReport, FitOptions, HprMixtureModel, ModelStructure, Posteriors, RegMixtureModel, TimeScale,
    TimeSeriesDataset,
};

impl RegMixtureModel {
    /// The same model expressed as a hidden-process mixture with one regime.
    pub fn as_single_regime(&self) -> HprMixtureModel {
        let k = self.clusters();
        HprMixtureModel::new(
            ModelStructure::new(k, 1, self.degree()),
            self.time_scale(),
            self.proportions().to_vec(),
            vec![GatingParameters::zeros(1); k],
            self.all_coefficients().iter().map(|b| vec![b.clone()]).collect(),
            self.variances().to_vec(),
        )
        .expect("a valid regression mixture is a valid single-regime model")
    }
}

fn design_for(model: &RegMixtureModel, data: &TimeSeriesDataset) -> Result<DesignMatrix, FitError> {
    Ok(DesignMatrix::from_times(&model.time_scale().transform(data.grid()), model.degree())?)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Log density of a whole series under the `K`-component isotropic mixture.
/// `design` must be built on the model's (transformed) time axis.
pub fn regmix_log_density(model: &RegMixtureModel, series: &[f64], design: &DesignMatrix) -> f64 {
    let terms: Vec<f64> = (0..model.clusters())
        .map(|k| {
            let mean = design.predict(model.coefficients(k)).expect("degree matches design");
            model.proportions()[k].ln() + log_isotropic_normal(sq_dist(series, &mean), series.len(), model.variance(k))
        })
        .collect();
    log_sum_exp(&terms)
}

fn e_step(model: &RegMixtureModel, data: &TimeSeriesDataset, design: &DesignMatrix) -> (Vec<f64>, f64) {
    let kk = model.clusters();
    let m = data.m();
    let means: Vec<Vec<f64>> = (0..kk).map(|k| design.predict(model.coefficients(k)).expect("degree matches")).collect();
    let mut r = vec![0.0; data.n() * kk];
    let mut loglik = 0.0;
    for (i, x) in data.series().iter().enumerate() {
        let row = &mut r[i * kk..(i + 1) * kk];
        for k in 0..kk {
            row[k] = model.proportions()[k].ln() + log_isotropic_normal(sq_dist(x, &means[k]), m, model.variance(k));
        }
        loglik += softmax_in_place(row);
    }
    (r, loglik)
}

/// Cluster posteriors `r_ik` by Bayes' rule.
pub fn regmix_posteriors(model: &RegMixtureModel, data: &TimeSeriesDataset) -> Result<Vec<Vec<f64>>, FitError> {
    let design = design_for(model, data)?;
    let (r, _) = e_step(model, data, &design);
    Ok(r.chunks(model.clusters()).map(<[f64]>::to_vec).collect())
}

/// Observed-data log-likelihood `sum_i log f(x_i | t)`.
pub fn regmix_log_likelihood(model: &RegMixtureModel, data: &TimeSeriesDataset) -> Result<f64, FitError> {
    let design = design_for(model, data)?;
    Ok(data.series().iter().map(|x| regmix_log_density(model, x, &design)).sum())
}

/// Mean curve `T beta_k` of cluster `k`.
pub fn regmix_mean_series(model: &RegMixtureModel, k: usize, data: &TimeSeriesDataset) -> Result<Vec<f64>, FitError> {
    Ok(design_for(model, data)?.predict(model.coefficients(k))?)
}

/// Starting point: degree-`p` least squares on `K` distinct random series,
/// residual variance per fit, proportions `1/K`.
pub fn regmix_initialize<R: Rng + ?Sized>(
    data: &TimeSeriesDataset,
    clusters: usize,
    degree: usize,
    time_scale: TimeScale,
    rng: &mut R,
) -> Result<RegMixtureModel, FitError> {
    if clusters == 0 {
        return Err(crate::DataError::InvalidStructure("cluster count must be at least 1".into()).into());
    }
    if clusters > data.n() {
        return Err(FitError::TooFewSeries { clusters, series: data.n() });
    }
    let design = DesignMatrix::from_times(&time_scale.transform(data.grid()), degree)?;
    let floor = data.variance_floor();
    let ones = vec![1.0; data.m()];
    let mut coefficients = Vec::with_capacity(clusters);
    let mut variances = Vec::with_capacity(clusters);
    for i in sample(rng, data.n(), clusters).into_vec() {
        let x = &data.series()[i];
        let beta = design.weighted_least_squares(&ones, x)?.coefficients;
        let fitted = design.predict(&beta)?;
        variances.push((sq_dist(x, &fitted) / data.m() as f64).max(floor));
        coefficients.push(beta);
    }
    Ok(RegMixtureModel::new(degree, time_scale, vec![1.0 / clusters as f64; clusters], coefficients, variances)?)
}

/// Result of one EM run of the baseline.
#[derive(Debug, Clone)]
pub struct RegEmRun {
    pub model: RegMixtureModel,
    pub posteriors: Vec<f64>,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub floored_variances: usize,
}

impl RegEmRun {
    pub fn final_log_likelihood(&self) -> f64 {
        *self.loglik_trace.last().expect("at least one E-step")
    }
}

/// EM for the baseline from a given starting point.
pub fn regmix_run_em(data: &TimeSeriesDataset, init: RegMixtureModel, max_iters: usize, tol: f64) -> Result<RegEmRun, FitError> {
    let design = design_for(&init, data)?;
    let (n, m) = (data.n(), data.m());
    let kk = init.clusters();
    let floor = data.variance_floor();
    let mut model = init;
    let mut trace: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let mut floored = 0;
    loop {
        let (r, loglik) = e_step(&model, data, &design);
        if !loglik.is_finite() {
            return Err(FitError::NonFiniteObjective);
        }
        let converged = trace.last().is_some_and(|&prev| (loglik - prev).abs() <= tol * prev.abs());
        trace.push(loglik);
        if converged || iterations >= max_iters {
            return Ok(RegEmRun { model, posteriors: r, loglik_trace: trace, iterations, converged, floored_variances: floored });
        }
        let mut mass = vec![0.0; kk];
        for row in r.chunks(kk) {
            for (s, v) in mass.iter_mut().zip(row) {
                *s += v;
            }
        }
        if let Some(k) = mass.iter().position(|&s| s < 1e-10 * n as f64) {
            return Err(FitError::EmptyComponent { cluster: k });
        }
        let mut coefficients = Vec::with_capacity(kk);
        let mut variances = Vec::with_capacity(kk);
        for k in 0..kk {
            let mut mean = vec![0.0; m];
            for (i, x) in data.series().iter().enumerate() {
                let w = r[i * kk + k];
                for (a, b) in mean.iter_mut().zip(x) {
                    *a += w * b;
                }
            }
            mean.iter_mut().for_each(|v| *v /= mass[k]);
            let beta = design.weighted_least_squares(&vec![mass[k]; m], &mean)?.coefficients;
            let fitted = design.predict(&beta)?;
            let sse: f64 = data.series().iter().enumerate().map(|(i, x)| r[i * kk + k] * sq_dist(x, &fitted)).sum();
            let var = sse / (m as f64 * mass[k]);
            variances.push(if var < floor || !var.is_finite() {
                floored += 1;
                floor
            } else {
                var
            });
            coefficients.push(beta);
        }
        let proportions = mass.iter().map(|s| s / n as f64).collect();
        model = RegMixtureModel::new(model.degree(), model.time_scale(), proportions, coefficients, variances)?;
        iterations += 1;
    }
}

/// Fits the baseline from `options.restarts` random starts and keeps the
/// highest log-likelihood.
pub fn regmix_fit_em(
    data: &TimeSeriesDataset,
    clusters: usize,
    degree: usize,
    options: &FitOptions,
) -> Result<(RegMixtureModel, EmFitReport), FitError> {
    let scale = TimeScale::for_grid(data.grid(), options.normalize_time);
    DesignMatrix::from_times(data.grid().times(), degree)?;
    if clusters > data.n() {
        return Err(FitError::TooFewSeries { clusters, series: data.n() });
    }
    let (run, winner, summaries) = best_of(
        options.restarts,
        options.seed,
        |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init = regmix_initialize(data, clusters, degree, scale, &mut rng)?;
            regmix_run_em(data, init, options.max_iters, options.tol)
        },
        RegEmRun::final_log_likelihood,
        |r| (r.iterations, r.converged),
    )?;
    let (n, m) = (data.n(), data.m());
    let lambda: Vec<f64> = (0..n)
        .flat_map(|i| {
            let row = run.posteriors[i * clusters..(i + 1) * clusters].to_vec();
            std::iter::repeat_n(row, m).flatten()
        })
        .collect();
    let mut warnings = Vec::new();
    if run.floored_variances > 0 {
        warnings.push(format!("{} variance updates hit the floor", run.floored_variances));
    }
    let report = EmFitReport {
        final_log_likelihood: run.final_log_likelihood(),
        loglik_trace: run.loglik_trace.clone(),
        iterations: run.iterations,
        converged: run.converged,
        posteriors: Posteriors::from_parts(n, m, clusters, 1, run.posteriors.clone(), lambda),
        restart_index: winner,
        restarts: summaries,
        warnings,
    };
    Ok((run.model, report))
}
