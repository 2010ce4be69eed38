//! Mixture of hidden-process regression models.
//!
//! Cluster `k` generates each point `x_ij` from one of `L` polynomial
//! regimes, chosen independently per point with the time-dependent logistic
//! proportions of the cluster's gate. The component density of a series is
//! therefore a product over points of `L`-component Gaussian mixtures.

mod estep;
mod fit;
mod mstep;
mod summary;

pub use estep::e_step;
pub use fit::{hpr_fit_em, initialize, restart_seed, run_em, EmRun};
pub(crate) use fit::best_of;
pub use mstep::{expected_complete_loglik, m_step, MStepDiagnostics, QTerms};
pub use summary::{map_partition, mean_series, segment, ContiguityViolation, SegmentationResult};

use crate::design::eval_polynomial;
use crate::stats::{log_sum_exp, log_normal};
use crate::types::{HprMixtureModel, TimeGrid, TimeSeriesDataset};

/// Per-model quantities that do not depend on the data values: regime mean
/// curves, log gate proportions and log normalizing constants on a grid.
pub(crate) struct Evaluator {
    m: usize,
    clusters: usize,
    segments: usize,
    /// `[(k * L + l) * m + j]`
    means: Vec<f64>,
    /// `[(k * m + j) * L + l]`
    log_gates: Vec<f64>,
    /// `[k * L + l]`
    inv_two_var: Vec<f64>,
    /// `[k * L + l]`, `-0.5 * ln(2 pi var)`
    log_const: Vec<f64>,
}

impl Evaluator {
    pub(crate) fn new(model: &HprMixtureModel, grid: &TimeGrid) -> Self {
        let s = model.structure();
        let (kk, ll) = (s.clusters, s.segments);
        let times = model.time_scale().transform(grid);
        let m = times.len();
        let mut means = vec![0.0; kk * ll * m];
        let mut log_gates = vec![0.0; kk * m * ll];
        let mut inv_two_var = vec![0.0; kk * ll];
        let mut log_const = vec![0.0; kk * ll];
        for k in 0..kk {
            for l in 0..ll {
                let beta = model.coefficients(k, l);
                for (j, &t) in times.iter().enumerate() {
                    means[(k * ll + l) * m + j] = eval_polynomial(beta, t);
                }
                let var = model.variance(k, l);
                inv_two_var[k * ll + l] = 0.5 / var;
                log_const[k * ll + l] = log_normal(0.0, 0.0, var);
            }
            let gate = model.gating(k);
            for (j, &t) in times.iter().enumerate() {
                let start = (k * m + j) * ll;
                gate.log_proportions_into(t, &mut log_gates[start..start + ll]);
            }
        }
        Self { m, clusters: kk, segments: ll, means, log_gates, inv_two_var, log_const }
    }

    /// Log of `pi_kl(t_j) N(x; mu_klj, var_kl)` for every regime, into `out`.
    #[inline]
    pub(crate) fn joint_log_terms(&self, k: usize, j: usize, x: f64, out: &mut [f64]) {
        let ll = self.segments;
        let gates = &self.log_gates[(k * self.m + j) * ll..(k * self.m + j + 1) * ll];
        for l in 0..ll {
            let r = x - self.means[(k * ll + l) * self.m + j];
            out[l] = gates[l] + self.log_const[k * ll + l] - r * r * self.inv_two_var[k * ll + l];
        }
    }

    #[inline]
    pub(crate) fn mean(&self, k: usize, l: usize, j: usize) -> f64 {
        self.means[(k * self.segments + l) * self.m + j]
    }

    #[inline]
    pub(crate) fn log_gate(&self, k: usize, j: usize, l: usize) -> f64 {
        self.log_gates[(k * self.m + j) * self.segments + l]
    }

    pub(crate) fn component_log_density(&self, k: usize, series: &[f64]) -> f64 {
        let mut terms = vec![0.0; self.segments];
        series
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                self.joint_log_terms(k, j, x, &mut terms);
                log_sum_exp(&terms)
            })
            .sum()
    }

    pub(crate) fn clusters(&self) -> usize {
        self.clusters
    }
}

/// `log f_k(x | t)`: sum over points of the log `L`-regime mixture density.
pub fn component_log_density(model: &HprMixtureModel, k: usize, series: &[f64], grid: &TimeGrid) -> f64 {
    Evaluator::new(model, grid).component_log_density(k, series)
}

/// `sum_i log sum_k pi_k f_k(x_i | t)`.
pub fn observed_log_likelihood(model: &HprMixtureModel, data: &TimeSeriesDataset) -> f64 {
    let eval = Evaluator::new(model, data.grid());
    let log_props: Vec<f64> = model.proportions().iter().map(|p| p.ln()).collect();
    let mut per_cluster = vec![0.0; eval.clusters()];
    data.series()
        .iter()
        .map(|x| {
            for (k, v) in per_cluster.iter_mut().enumerate() {
                *v = log_props[k] + eval.component_log_density(k, x);
            }
            log_sum_exp(&per_cluster)
        })
        .sum()
}
