use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::estep::e_step_with;
use super::mstep::m_step_with;
use super::Evaluator;
use crate::design::DesignMatrix;
use crate::error::FitError;
use crate::gating::{GatingParameters, IrlsProblem};
use crate::types::{
    EmFitReport, FitOptions, HprMixtureModel, ModelStructure, Posteriors, RestartSummary, TimeScale,
    TimeSeriesDataset, VarianceMode,
};

/// Result of a single EM run from a given starting point.
#[derive(Debug, Clone)]
pub struct EmRun {
    pub model: HprMixtureModel,
    pub posteriors: Posteriors,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl EmRun {
    pub fn final_log_likelihood(&self) -> f64 {
        *self.loglik_trace.last().expect("at least one E-step")
    }
}

pub(crate) fn check_feasible(data: &TimeSeriesDataset, structure: &ModelStructure) -> Result<(), FitError> {
    structure.validate()?;
    let segment_len = data.m() / structure.segments;
    if segment_len < structure.degree + 1 {
        return Err(FitError::InsufficientSegmentLength { segment_len, degree: structure.degree });
    }
    if structure.clusters > data.n() {
        return Err(FitError::TooFewSeries { clusters: structure.clusters, series: data.n() });
    }
    Ok(())
}

/// Random starting point: `K` distinct series drawn uniformly, each cut into
/// `L` equal contiguous segments (the last absorbs the remainder) and fit by
/// ordinary least squares per segment. Gates start at zero and proportions
/// at `1/K`.
pub fn initialize<R: Rng + ?Sized>(
    data: &TimeSeriesDataset,
    structure: &ModelStructure,
    time_scale: TimeScale,
    rng: &mut R,
) -> Result<HprMixtureModel, FitError> {
    check_feasible(data, structure)?;
    let (kk, ll, p) = (structure.clusters, structure.segments, structure.degree);
    let m = data.m();
    let times = time_scale.transform(data.grid());
    let floor = data.variance_floor();
    let picks = sample(rng, data.n(), kk).into_vec();
    let seg_len = m / ll;
    let mut coefficients = Vec::with_capacity(kk);
    let mut sse = vec![0.0; kk * ll];
    let mut counts = vec![0usize; kk * ll];
    for (k, &i) in picks.iter().enumerate() {
        let x = &data.series()[i];
        let mut row = Vec::with_capacity(ll);
        for l in 0..ll {
            let start = l * seg_len;
            let end = if l + 1 == ll { m } else { start + seg_len };
            let design = DesignMatrix::from_times(&times[start..end], p)?;
            let sol = design.weighted_least_squares(&vec![1.0; end - start], &x[start..end])?;
            let fitted = design.predict(&sol.coefficients)?;
            sse[k * ll + l] = x[start..end].iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum();
            counts[k * ll + l] = end - start;
            row.push(sol.coefficients);
        }
        coefficients.push(row);
    }
    let pooled = |idx: &[usize]| {
        let s: f64 = idx.iter().map(|&i| sse[i]).sum();
        let c: usize = idx.iter().map(|&i| counts[i]).sum();
        (s / c as f64).max(floor)
    };
    let variances = match structure.variance_mode {
        VarianceMode::Free => (0..kk * ll).map(|i| pooled(&[i])).collect(),
        VarianceMode::CommonPerCluster => {
            (0..kk).map(|k| pooled(&(k * ll..(k + 1) * ll).collect::<Vec<_>>())).collect()
        }
        VarianceMode::CommonGlobal => vec![pooled(&(0..kk * ll).collect::<Vec<_>>())],
    };
    let model = HprMixtureModel::new(
        *structure,
        time_scale,
        vec![1.0 / kk as f64; kk],
        vec![GatingParameters::zeros(ll); kk],
        coefficients,
        variances,
    )?;
    Ok(model)
}

/// Runs EM from `init` until the relative log-likelihood improvement drops
/// below `tol` or `max_iters` M-steps have been taken.
pub fn run_em(data: &TimeSeriesDataset, init: HprMixtureModel, max_iters: usize, tol: f64) -> Result<EmRun, FitError> {
    let times = init.time_scale().transform(data.grid());
    let design = DesignMatrix::from_times(&times, init.structure().degree)?;
    let cap = if init.time_scale().is_identity() { IrlsProblem::CAP_RAW } else { IrlsProblem::CAP_NORMALIZED };
    let floor = data.variance_floor();
    let mut model = init;
    let mut trace = Vec::new();
    let mut warnings = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut diag_total = super::MStepDiagnostics::default();
    loop {
        let eval = Evaluator::new(&model, data.grid());
        let (posteriors, loglik) = e_step_with(&eval, model.proportions(), data);
        if !loglik.is_finite() {
            return Err(FitError::NonFiniteObjective);
        }
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            if (loglik - prev).abs() <= tol * prev.abs() {
                converged = true;
            }
        }
        trace.push(loglik);
        if converged || iterations >= max_iters {
            if diag_total.regularized_solves > 0 {
                warnings.push(format!("{} weighted least-squares solves needed ridge jitter", diag_total.regularized_solves));
            }
            if diag_total.floored_variances > 0 {
                warnings.push(format!("{} variance updates hit the floor", diag_total.floored_variances));
            }
            if diag_total.saturated_gates > 0 {
                warnings.push(format!("{} gate updates hit the parameter cap", diag_total.saturated_gates));
            }
            return Ok(EmRun { model, posteriors, loglik_trace: trace, iterations, converged, warnings });
        }
        let (next, diag) = m_step_with(&posteriors, data, &model, &times, &design, floor, cap)?;
        diag_total.regularized_solves += diag.regularized_solves;
        diag_total.floored_variances += diag.floored_variances;
        diag_total.damped_gates += diag.damped_gates;
        diag_total.saturated_gates += diag.saturated_gates;
        model = next;
        iterations += 1;
    }
}

/// Seed of restart `index` derived from the master seed (splitmix64 mixing).
pub fn restart_seed(master: u64, index: usize) -> u64 {
    let mut z = master.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Best-of-restarts selection shared by both EM routines: the highest final
/// log-likelihood among successful runs wins, lowest index on ties.
pub(crate) fn best_of<T, F>(
    restarts: usize,
    master_seed: u64,
    run: F,
    final_ll: impl Fn(&T) -> f64,
    summarize: impl Fn(&T) -> (usize, bool),
) -> Result<(T, usize, Vec<RestartSummary>), FitError>
where
    T: Send,
    F: Fn(u64) -> Result<T, FitError> + Sync,
{
    let restarts = restarts.max(1);
    let outcomes: Vec<(u64, Result<T, FitError>)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let seed = restart_seed(master_seed, r);
            (seed, run(seed))
        })
        .collect();
    let mut summaries = Vec::with_capacity(restarts);
    let mut best: Option<(usize, f64)> = None;
    for (idx, (seed, outcome)) in outcomes.iter().enumerate() {
        match outcome {
            Ok(v) => {
                let ll = final_ll(v);
                let (iterations, converged) = summarize(v);
                summaries.push(RestartSummary { seed: *seed, final_log_likelihood: Some(ll), iterations, converged, failure: None });
                if best.is_none_or(|(_, b)| ll > b) {
                    best = Some((idx, ll));
                }
            }
            Err(e) => summaries.push(RestartSummary {
                seed: *seed,
                final_log_likelihood: None,
                iterations: 0,
                converged: false,
                failure: Some(e.to_string()),
            }),
        }
    }
    let (winner, _) = best.ok_or(FitError::AllRestartsFailed { restarts })?;
    let value = outcomes.into_iter().nth(winner).and_then(|(_, o)| o.ok()).expect("winner succeeded");
    Ok((value, winner, summaries))
}

/// Fits the mixture by EM from `options.restarts` random starting points and
/// keeps the run with the highest log-likelihood.
pub fn hpr_fit_em(
    data: &TimeSeriesDataset,
    structure: &ModelStructure,
    options: &FitOptions,
) -> Result<(HprMixtureModel, EmFitReport), FitError> {
    check_feasible(data, structure)?;
    let scale = TimeScale::for_grid(data.grid(), options.normalize_time);
    let (run, winner, summaries) = best_of(
        options.restarts,
        options.seed,
        |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init = initialize(data, structure, scale, &mut rng)?;
            run_em(data, init, options.max_iters, options.tol)
        },
        EmRun::final_log_likelihood,
        |r| (r.iterations, r.converged),
    )?;
    let report = EmFitReport {
        final_log_likelihood: run.final_log_likelihood(),
        loglik_trace: run.loglik_trace,
        iterations: run.iterations,
        converged: run.converged,
        posteriors: run.posteriors,
        restart_index: winner,
        restarts: summaries,
        warnings: run.warnings,
    };
    Ok((run.model, report))
}
