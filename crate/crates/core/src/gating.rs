//! Logistic regime proportions and the IRLS (Newton-Raphson) solver used in
//! the gating M-step.
//!
//! Regime `l` at time `t` receives the score `a_l0 + a_l1 * t`; proportions
//! are the softmax of the scores. The last regime is the reference and its
//! pair is pinned to `(0, 0)`, so a gate with `L` regimes has `2(L-1)` free
//! parameters.

use nalgebra::{DMatrix, DVector};

use crate::error::{DataError, FitError};
use crate::stats::log_sum_exp;

/// Intercept/slope pairs of one logistic gate, last pair pinned to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GatingParameters {
    pairs: Vec<[f64; 2]>,
}

impl GatingParameters {
    /// Uniform gate over `segments` regimes.
    pub fn zeros(segments: usize) -> Self {
        assert!(segments >= 1, "a gate needs at least one regime");
        Self { pairs: vec![[0.0, 0.0]; segments] }
    }

    /// Builds a gate from `(intercept, slope)` pairs whose last entry must be `(0, 0)`.
    pub fn from_pairs(pairs: Vec<[f64; 2]>) -> Result<Self, DataError> {
        if pairs.is_empty() {
            return Err(DataError::InvalidModel("gate with no regimes".into()));
        }
        if pairs[pairs.len() - 1] != [0.0, 0.0] {
            return Err(DataError::InvalidModel("reference regime must be pinned to (0, 0)".into()));
        }
        Ok(Self { pairs })
    }

    /// Builds a gate from arbitrary pairs by subtracting the last pair from
    /// every pair. Proportions are unchanged.
    pub fn pinned_from_pairs(pairs: &[[f64; 2]]) -> Result<Self, DataError> {
        let last = *pairs.last().ok_or_else(|| DataError::InvalidModel("gate with no regimes".into()))?;
        Self::from_pairs(pairs.iter().map(|p| [p[0] - last[0], p[1] - last[1]]).collect())
    }

    /// Builds a gate from the `2(L-1)` free parameters laid out as
    /// `[a_00, a_01, a_10, a_11, ...]`.
    pub fn from_free(free: &[f64]) -> Result<Self, DataError> {
        if !free.len().is_multiple_of(2) {
            return Err(DataError::DimensionMismatch { expected: free.len() + 1, found: free.len() });
        }
        let mut pairs: Vec<[f64; 2]> = free.chunks(2).map(|c| [c[0], c[1]]).collect();
        pairs.push([0.0, 0.0]);
        Ok(Self { pairs })
    }

    pub fn segments(&self) -> usize {
        self.pairs.len()
    }

    pub fn free_len(&self) -> usize {
        2 * (self.pairs.len() - 1)
    }

    pub fn pairs(&self) -> &[[f64; 2]] {
        &self.pairs
    }

    pub fn free_params(&self) -> Vec<f64> {
        self.pairs[..self.pairs.len() - 1].iter().flatten().copied().collect()
    }

    pub fn is_pinned(&self) -> bool {
        self.pairs.last() == Some(&[0.0, 0.0])
    }

    /// Linear logit scores `a_l0 + a_l1 * t`.
    pub fn scores_into(&self, t: f64, out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.pairs) {
            *o = p[0] + p[1] * t;
        }
    }

    /// Log proportions at `t`, written into `out` (length `L`).
    pub fn log_proportions_into(&self, t: f64, out: &mut [f64]) {
        self.scores_into(t, out);
        let lse = log_sum_exp(out);
        for o in out.iter_mut() {
            *o -= lse;
        }
    }

    /// Regime proportions at `t`; positive and summing to one.
    pub fn logistic_proportions(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.segments()];
        self.log_proportions_into(t, &mut out);
        out.iter_mut().for_each(|v| *v = v.exp());
        out
    }

    /// Index of the regime with the largest proportion at `t` (lowest index on ties).
    pub fn dominant_regime(&self, t: f64) -> usize {
        let mut scores = vec![0.0; self.segments()];
        self.scores_into(t, &mut scores);
        crate::stats::argmax(&scores)
    }
}

/// Weighted multinomial logistic problem over a time grid.
///
/// The objective is linear in the weights and the proportions depend only on
/// time, so per-series weights are summed over series before solving:
/// `weights[j * L + l]` is the total posterior mass of regime `l` at point `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct IrlsProblem {
    times: Vec<f64>,
    segments: usize,
    weights: Vec<f64>,
    pub max_iters: usize,
    /// Stop once the gradient max-norm drops below this value.
    pub tolerance: f64,
    /// Bound on the magnitude of every free parameter.
    pub alpha_cap: f64,
}

impl IrlsProblem {
    pub const DEFAULT_MAX_ITERS: usize = 100;
    pub const DEFAULT_TOLERANCE: f64 = 1e-6;
    /// Cap for gates on a unit-normalized time axis.
    pub const CAP_NORMALIZED: f64 = 1e4;
    /// Cap for gates on a raw time axis.
    pub const CAP_RAW: f64 = 1e6;

    /// `weights` is `m x L`, row-major.
    pub fn new(times: Vec<f64>, segments: usize, weights: Vec<f64>) -> Result<Self, DataError> {
        if segments == 0 {
            return Err(DataError::InvalidStructure("gate with no regimes".into()));
        }
        if weights.len() != times.len() * segments {
            return Err(DataError::DimensionMismatch { expected: times.len() * segments, found: weights.len() });
        }
        if let Some(pos) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(DataError::NonFiniteValue { series: 1, position: pos + 1 });
        }
        Ok(Self {
            times,
            segments,
            weights,
            max_iters: Self::DEFAULT_MAX_ITERS,
            tolerance: Self::DEFAULT_TOLERANCE,
            alpha_cap: Self::CAP_RAW,
        })
    }

    /// Sums per-series weights `series_weights[i][j][l]` over series.
    pub fn from_series_weights(times: Vec<f64>, series_weights: &[Vec<Vec<f64>>]) -> Result<Self, DataError> {
        let m = times.len();
        let segments = series_weights
            .first()
            .and_then(|s| s.first())
            .map(Vec::len)
            .ok_or(DataError::EmptyDataset)?;
        let mut weights = vec![0.0; m * segments];
        for (i, s) in series_weights.iter().enumerate() {
            if s.len() != m {
                return Err(DataError::RaggedSeries { series: i + 1, expected: m, found: s.len() });
            }
            for (j, row) in s.iter().enumerate() {
                if row.len() != segments {
                    return Err(DataError::DimensionMismatch { expected: segments, found: row.len() });
                }
                for (l, w) in row.iter().enumerate() {
                    weights[j * segments + l] += w;
                }
            }
        }
        Self::new(times, segments, weights)
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.alpha_cap = cap;
        self
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn weight(&self, j: usize, l: usize) -> f64 {
        self.weights[j * self.segments + l]
    }
}

/// `sum_j sum_l w_jl log pi_l(t_j)`.
pub fn gating_objective(alpha: &GatingParameters, problem: &IrlsProblem) -> f64 {
    let l = problem.segments;
    let mut logp = vec![0.0; l];
    let mut total = 0.0;
    for (j, &t) in problem.times.iter().enumerate() {
        let w = &problem.weights[j * l..(j + 1) * l];
        if w.iter().all(|&x| x == 0.0) {
            continue;
        }
        alpha.log_proportions_into(t, &mut logp);
        for (wl, lp) in w.iter().zip(&logp) {
            if *wl > 0.0 {
                total += wl * lp;
            }
        }
    }
    total
}

/// Gradient with respect to the free parameters:
/// `dQ/da_l = sum_j (w_jl - W_j pi_l(t_j)) (1, t_j)` for `l < L`.
pub fn gating_gradient(alpha: &GatingParameters, problem: &IrlsProblem) -> Vec<f64> {
    let (g, _) = gradient_and_hessian(alpha, problem, false);
    g.as_slice().to_vec()
}

/// Hessian with respect to the free parameters (negative semidefinite).
pub fn gating_hessian(alpha: &GatingParameters, problem: &IrlsProblem) -> DMatrix<f64> {
    gradient_and_hessian(alpha, problem, true).1
}

fn gradient_and_hessian(alpha: &GatingParameters, problem: &IrlsProblem, with_hessian: bool) -> (DVector<f64>, DMatrix<f64>) {
    let l = problem.segments;
    let dim = 2 * (l - 1);
    let mut grad = DVector::zeros(dim);
    let mut hess = DMatrix::zeros(if with_hessian { dim } else { 0 }, if with_hessian { dim } else { 0 });
    let mut pi = vec![0.0; l];
    for (j, &t) in problem.times.iter().enumerate() {
        let w = &problem.weights[j * l..(j + 1) * l];
        let total: f64 = w.iter().sum();
        if total == 0.0 {
            continue;
        }
        alpha.log_proportions_into(t, &mut pi);
        pi.iter_mut().for_each(|v| *v = v.exp());
        let x = [1.0, t];
        for a in 0..l - 1 {
            let resid = w[a] - total * pi[a];
            grad[2 * a] += resid;
            grad[2 * a + 1] += resid * t;
            if with_hessian {
                for b in 0..l - 1 {
                    let delta = if a == b { 1.0 } else { 0.0 };
                    let c = -total * pi[a] * (delta - pi[b]);
                    for u in 0..2 {
                        for v in 0..2 {
                            hess[(2 * a + u, 2 * b + v)] += c * x[u] * x[v];
                        }
                    }
                }
            }
        }
    }
    (grad, hess)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrlsReport {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    /// Levenberg damping was needed for at least one step.
    pub damped: bool,
    /// A parameter hit the divergence cap (effectively a hard transition).
    pub saturated: bool,
}

fn max_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximizes the gating objective by safeguarded Newton-Raphson starting from `init`.
///
/// Each step is halved (up to 30 times) until the objective increases, so the
/// returned point never scores below `init`. A singular Hessian triggers
/// Levenberg damping, which is reported rather than treated as failure.
pub fn irls_fit(problem: &IrlsProblem, init: &GatingParameters) -> Result<(GatingParameters, IrlsReport), FitError> {
    if init.segments() != problem.segments {
        return Err(DataError::DimensionMismatch { expected: problem.segments, found: init.segments() }.into());
    }
    let mut alpha = init.clone();
    let mut objective = gating_objective(&alpha, problem);
    if !objective.is_finite() {
        return Err(FitError::NonFiniteObjective);
    }
    let mut report = IrlsReport {
        iterations: 0,
        gradient_norm: 0.0,
        objective_trace: vec![objective],
        converged: false,
        damped: false,
        saturated: false,
    };
    if problem.segments == 1 {
        report.converged = true;
        return Ok((alpha, report));
    }
    let dim = alpha.free_len();
    for _ in 0..problem.max_iters {
        let (grad, hess) = gradient_and_hessian(&alpha, problem, true);
        report.gradient_norm = max_norm(&grad);
        if report.gradient_norm < problem.tolerance {
            report.converged = true;
            break;
        }
        let neg_hess = -hess;
        let direction = match neg_hess.clone().cholesky() {
            Some(chol) => chol.solve(&grad),
            None => {
                report.damped = true;
                let mut tau = 1e-6 * neg_hess.trace().abs().max(1e-12);
                let mut solved = None;
                for _ in 0..40 {
                    let damped = &neg_hess + DMatrix::<f64>::identity(dim, dim) * tau;
                    if let Some(chol) = damped.cholesky() {
                        solved = Some(chol.solve(&grad));
                        break;
                    }
                    tau *= 10.0;
                }
                // Gradient ascent as a last resort.
                solved.unwrap_or_else(|| grad.clone())
            }
        };
        let current = alpha.free_params();
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=30 {
            let mut candidate: Vec<f64> = current.iter().zip(direction.iter()).map(|(a, d)| a + step * d).collect();
            let clamped = candidate.iter().any(|a| a.abs() > problem.alpha_cap);
            if clamped {
                candidate.iter_mut().for_each(|a| *a = a.clamp(-problem.alpha_cap, problem.alpha_cap));
            }
            let cand = GatingParameters::from_free(&candidate).expect("even length");
            let value = gating_objective(&cand, problem);
            if value.is_finite() && value > objective {
                accepted = Some((cand, value, clamped));
                break;
            }
            if clamped {
                // Moving further out cannot help once the cap binds.
                report.saturated = true;
            }
            step *= 0.5;
        }
        report.iterations += 1;
        match accepted {
            Some((cand, value, clamped)) => {
                alpha = cand;
                objective = value;
                report.objective_trace.push(objective);
                if clamped {
                    report.saturated = true;
                    break;
                }
            }
            None => break,
        }
    }
    if !report.converged {
        report.gradient_norm = max_norm(&gradient_and_hessian(&alpha, problem, false).0);
        report.converged = report.gradient_norm < problem.tolerance;
    }
    Ok((alpha, report))
}
