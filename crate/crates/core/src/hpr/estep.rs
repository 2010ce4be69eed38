use super::Evaluator;
use crate::stats::{log_sum_exp, softmax_in_place};
use crate::types::{HprMixtureModel, Posteriors, TimeSeriesDataset};

/// Computes cluster posteriors `r_ik`, joint point posteriors `lambda_ijkl`
/// and the observed log-likelihood at the current parameters.
pub fn e_step(model: &HprMixtureModel, data: &TimeSeriesDataset) -> (Posteriors, f64) {
    let eval = Evaluator::new(model, data.grid());
    e_step_with(&eval, model.proportions(), data)
}

pub(crate) fn e_step_with(eval: &Evaluator, proportions: &[f64], data: &TimeSeriesDataset) -> (Posteriors, f64) {
    let n = data.n();
    let m = data.m();
    let kk = proportions.len();
    let ll = eval.segments;
    let block = kk * ll;
    let mut r = vec![0.0; n * kk];
    let mut lambda = vec![0.0; n * m * block];
    let mut loglik = 0.0;
    let mut terms = vec![0.0; ll];
    let mut cluster_log = vec![0.0; kk];
    for (i, x) in data.series().iter().enumerate() {
        let lam_i = &mut lambda[i * m * block..(i + 1) * m * block];
        for k in 0..kk {
            let mut log_fk = 0.0;
            for (j, &xij) in x.iter().enumerate() {
                eval.joint_log_terms(k, j, xij, &mut terms);
                // Within-cluster regime posteriors; scaled by r_ik below.
                log_fk += softmax_in_place(&mut terms);
                lam_i[j * block + k * ll..j * block + (k + 1) * ll].copy_from_slice(&terms);
            }
            cluster_log[k] = proportions[k].ln() + log_fk;
        }
        loglik += log_sum_exp(&cluster_log);
        softmax_in_place(&mut cluster_log);
        r[i * kk..(i + 1) * kk].copy_from_slice(&cluster_log);
        for j in 0..m {
            for k in 0..kk {
                for v in &mut lam_i[j * block + k * ll..j * block + (k + 1) * ll] {
                    *v *= cluster_log[k];
                }
            }
        }
    }
    (Posteriors::from_parts(n, m, kk, ll, r, lambda), loglik)
}
