use super::Evaluator;
use crate::design::DesignMatrix;
use crate::error::FitError;
use crate::gating::{irls_fit, IrlsProblem};
use crate::types::{GatingMode, HprMixtureModel, Posteriors, TimeSeriesDataset, VarianceMode};

/// Counters describing safeguards that fired during an M-step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MStepDiagnostics {
    pub regularized_solves: usize,
    pub floored_variances: usize,
    pub damped_gates: usize,
    pub saturated_gates: usize,
}

/// Terms of the expected complete-data log-likelihood `Q = Q1 + Q2 + Q3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QTerms {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

impl QTerms {
    pub fn total(&self) -> f64 {
        self.q1 + self.q2 + self.q3
    }
}

/// Evaluates `Q(theta, theta_q)` split into its proportion, gating and
/// regression terms, given posteriors computed at `theta_q`.
pub fn expected_complete_loglik(model: &HprMixtureModel, posteriors: &Posteriors, data: &TimeSeriesDataset) -> QTerms {
    let eval = Evaluator::new(model, data.grid());
    let kk = model.structure().clusters;
    let ll = model.structure().segments;
    let mut q1 = 0.0;
    let mut q2 = 0.0;
    let mut q3 = 0.0;
    for (i, x) in data.series().iter().enumerate() {
        for k in 0..kk {
            let r = posteriors.r(i, k);
            if r > 0.0 {
                q1 += r * model.proportions()[k].ln();
            }
            for (j, &xij) in x.iter().enumerate() {
                for l in 0..ll {
                    let lam = posteriors.lambda(i, j, k, l);
                    if lam == 0.0 {
                        continue;
                    }
                    q2 += lam * eval.log_gate(k, j, l);
                    let resid = xij - eval.mean(k, l, j);
                    q3 += lam * (eval.log_const[k * ll + l] - resid * resid * eval.inv_two_var[k * ll + l]);
                }
            }
        }
    }
    QTerms { q1, q2, q3 }
}

/// Updates every parameter from the posteriors.
///
/// Proportions and regression parameters are maximized in closed form; each
/// gate is improved by IRLS warm-started at the gate of `previous`, which
/// also supplies the structure and time scale.
pub fn m_step(
    posteriors: &Posteriors,
    data: &TimeSeriesDataset,
    previous: &HprMixtureModel,
    variance_floor: f64,
) -> Result<(HprMixtureModel, MStepDiagnostics), FitError> {
    let times = previous.time_scale().transform(data.grid());
    let design = DesignMatrix::from_times(&times, previous.structure().degree)?;
    let cap = if previous.time_scale().is_identity() { IrlsProblem::CAP_RAW } else { IrlsProblem::CAP_NORMALIZED };
    m_step_with(posteriors, data, previous, &times, &design, variance_floor, cap)
}

pub(crate) fn m_step_with(
    posteriors: &Posteriors,
    data: &TimeSeriesDataset,
    previous: &HprMixtureModel,
    times: &[f64],
    design: &DesignMatrix,
    variance_floor: f64,
    alpha_cap: f64,
) -> Result<(HprMixtureModel, MStepDiagnostics), FitError> {
    let structure = *previous.structure();
    let (n, m) = (data.n(), data.m());
    let (kk, ll) = (structure.clusters, structure.segments);
    let mut diag = MStepDiagnostics::default();

    let mass = posteriors.cluster_mass();
    if let Some(k) = mass.iter().position(|&s| s < 1e-10 * n as f64) {
        return Err(FitError::EmptyComponent { cluster: k });
    }
    let proportions: Vec<f64> = mass.iter().map(|s| s / n as f64).collect();

    // Regime masses per point: w[(k * L + l) * m + j] = sum_i lambda_ijkl,
    // and weighted sums of observations for the least-squares targets.
    let mut weight = vec![0.0; kk * ll * m];
    let mut weighted_x = vec![0.0; kk * ll * m];
    for (i, x) in data.series().iter().enumerate() {
        for (j, &xij) in x.iter().enumerate() {
            let block = posteriors.lambda_point(i, j);
            for k in 0..kk {
                for l in 0..ll {
                    let lam = block[k * ll + l];
                    let idx = (k * ll + l) * m + j;
                    weight[idx] += lam;
                    weighted_x[idx] += lam * xij;
                }
            }
        }
    }

    let gating = if ll == 1 {
        previous.gating_sets().to_vec()
    } else {
        let solve = |gate_weights: Vec<f64>, init: &crate::gating::GatingParameters, diag: &mut MStepDiagnostics| {
            let problem = IrlsProblem::new(times.to_vec(), ll, gate_weights)?.with_cap(alpha_cap);
            let (alpha, report) = irls_fit(&problem, init)?;
            diag.damped_gates += report.damped as usize;
            diag.saturated_gates += report.saturated as usize;
            Ok::<_, FitError>(alpha)
        };
        match structure.gating_mode {
            GatingMode::PerCluster => (0..kk)
                .map(|k| {
                    let mut gw = vec![0.0; m * ll];
                    for j in 0..m {
                        for l in 0..ll {
                            gw[j * ll + l] = weight[(k * ll + l) * m + j];
                        }
                    }
                    solve(gw, previous.gating(k), &mut diag)
                })
                .collect::<Result<Vec<_>, _>>()?,
            GatingMode::Shared => {
                let mut gw = vec![0.0; m * ll];
                for k in 0..kk {
                    for j in 0..m {
                        for l in 0..ll {
                            gw[j * ll + l] += weight[(k * ll + l) * m + j];
                        }
                    }
                }
                let alpha = solve(gw, previous.gating(0), &mut diag)?;
                vec![alpha; kk]
            }
        }
    };

    // Weighted least squares per (k, l) on the weighted mean series.
    let mut coefficients = vec![vec![Vec::new(); ll]; kk];
    let mut sse = vec![0.0; kk * ll];
    let mut total_weight = vec![0.0; kk * ll];
    let mut targets = vec![0.0; m];
    for k in 0..kk {
        for l in 0..ll {
            let w = &weight[(k * ll + l) * m..(k * ll + l + 1) * m];
            let wx = &weighted_x[(k * ll + l) * m..(k * ll + l + 1) * m];
            let total: f64 = w.iter().sum();
            total_weight[k * ll + l] = total;
            if total <= 1e-12 * n as f64 {
                // A regime with no mass leaves Q unchanged whatever its parameters.
                coefficients[k][l] = previous.coefficients(k, l).to_vec();
                continue;
            }
            for j in 0..m {
                targets[j] = if w[j] > 0.0 { wx[j] / w[j] } else { 0.0 };
            }
            let sol = design.weighted_least_squares(w, &targets)?;
            diag.regularized_solves += sol.regularized as usize;
            coefficients[k][l] = sol.coefficients;
        }
    }
    let fitted: Vec<Vec<Vec<f64>>> = coefficients
        .iter()
        .map(|row| row.iter().map(|beta| design.predict(beta).expect("dimension checked")).collect())
        .collect();
    for (i, x) in data.series().iter().enumerate() {
        for (j, &xij) in x.iter().enumerate() {
            let block = posteriors.lambda_point(i, j);
            for k in 0..kk {
                for l in 0..ll {
                    let lam = block[k * ll + l];
                    if lam > 0.0 {
                        let r = xij - fitted[k][l][j];
                        sse[k * ll + l] += lam * r * r;
                    }
                }
            }
        }
    }

    let mut floor = |v: f64| {
        if v < variance_floor || !v.is_finite() {
            diag.floored_variances += 1;
            variance_floor
        } else {
            v
        }
    };
    let variances: Vec<f64> = match structure.variance_mode {
        VarianceMode::Free => (0..kk * ll)
            .map(|idx| {
                if total_weight[idx] <= 1e-12 * n as f64 {
                    previous.variance(idx / ll, idx % ll)
                } else {
                    floor(sse[idx] / total_weight[idx])
                }
            })
            .collect(),
        VarianceMode::CommonPerCluster => (0..kk)
            .map(|k| {
                let s: f64 = sse[k * ll..(k + 1) * ll].iter().sum();
                let w: f64 = total_weight[k * ll..(k + 1) * ll].iter().sum();
                floor(s / w)
            })
            .collect(),
        VarianceMode::CommonGlobal => vec![floor(sse.iter().sum::<f64>() / (n * m) as f64)],
    };

    let model = HprMixtureModel::new(structure, previous.time_scale(), proportions, gating, coefficients, variances)?;
    Ok((model, diag))
}
