use thiserror::Error;

use crate::design::eval_polynomial;
use crate::stats::argmax;
use crate::types::{HprMixtureModel, TimeGrid};

/// Cluster label of each series under the MAP rule (lowest index on ties).
pub fn map_partition<R: AsRef<[f64]>>(r: &[R]) -> Vec<usize> {
    r.iter().map(|row| argmax(row.as_ref())).collect()
}

/// Gate-weighted regime polynomials of cluster `k` on the grid:
/// `c_kj = sum_l pi_kl(t_j) T_j' beta_kl`.
pub fn mean_series(model: &HprMixtureModel, k: usize, grid: &TimeGrid) -> Vec<f64> {
    let scale = model.time_scale();
    let gate = model.gating(k);
    let ll = model.structure().segments;
    grid.times()
        .iter()
        .map(|&t| {
            let u = scale.apply(t);
            let pi = gate.logistic_proportions(u);
            (0..ll).map(|l| pi[l] * eval_polynomial(model.coefficients(k, l), u)).sum()
        })
        .collect()
}

/// Raised if a regime's dominance set is not a single contiguous run.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("regime {regime} of cluster {cluster} dominates on a non-contiguous set")]
pub struct ContiguityViolation {
    pub cluster: usize,
    pub regime: usize,
}

/// Grid-index intervals on which each regime has the largest gate proportion.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub cluster: usize,
    /// Dominant regime at every grid point.
    pub labels: Vec<usize>,
    /// `intervals[l]` is the inclusive 0-based index range where regime `l`
    /// dominates, or `None` if it never does.
    pub intervals: Vec<Option<(usize, usize)>>,
}

impl SegmentationResult {
    pub fn regime_changes(&self) -> usize {
        self.labels.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// Nonempty intervals ordered along the grid as `(regime, start, end)`.
    pub fn ordered_segments(&self) -> Vec<(usize, usize, usize)> {
        let mut segs: Vec<_> = self
            .intervals
            .iter()
            .enumerate()
            .filter_map(|(l, iv)| iv.map(|(s, e)| (l, s, e)))
            .collect();
        segs.sort_by_key(|&(_, s, _)| s);
        segs
    }
}

/// Segments the grid for cluster `k` by the dominant regime of its gate.
pub fn segment(model: &HprMixtureModel, k: usize, grid: &TimeGrid) -> Result<SegmentationResult, ContiguityViolation> {
    let scale = model.time_scale();
    let gate = model.gating(k);
    let labels: Vec<usize> = grid.times().iter().map(|&t| gate.dominant_regime(scale.apply(t))).collect();
    let mut intervals: Vec<Option<(usize, usize)>> = vec![None; gate.segments()];
    for (j, &l) in labels.iter().enumerate() {
        intervals[l] = match intervals[l] {
            None => Some((j, j)),
            Some((s, e)) if e + 1 == j => Some((s, j)),
            Some(_) => return Err(ContiguityViolation { cluster: k, regime: l }),
        };
    }
    Ok(SegmentationResult { cluster: k, labels, intervals })
}
