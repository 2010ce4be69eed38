//! Evaluation criteria: misclassification rate against a reference
//! partition and intra-cluster inertia against estimated mean series.

use crate::error::DataError;
use crate::types::TimeSeriesDataset;

fn confusion(true_labels: &[usize], predicted: &[usize], clusters: usize) -> Result<Vec<Vec<usize>>, DataError> {
    if true_labels.len() != predicted.len() {
        return Err(DataError::DimensionMismatch { expected: true_labels.len(), found: predicted.len() });
    }
    let mut c = vec![vec![0usize; clusters]; clusters];
    for (&a, &b) in true_labels.iter().zip(predicted) {
        for label in [a, b] {
            if label >= clusters {
                return Err(DataError::LabelOutOfRange { label: label + 1, clusters });
            }
        }
        c[a][b] += 1;
    }
    Ok(c)
}

/// Best agreement `max_perm sum_b C[perm[b]][b]` by exhaustive search (Heap's algorithm).
fn best_agreement_exact(c: &[Vec<usize>]) -> usize {
    let k = c.len();
    let mut perm: Vec<usize> = (0..k).collect();
    let score = |p: &[usize]| p.iter().enumerate().map(|(b, &a)| c[a][b]).sum::<usize>();
    let mut best = score(&perm);
    let mut stack = vec![0usize; k];
    let mut i = 1;
    while i < k {
        if stack[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(stack[i], i);
            }
            best = best.max(score(&perm));
            stack[i] += 1;
            i = 1;
        } else {
            stack[i] = 0;
            i += 1;
        }
    }
    best
}

/// Greedy matching on the confusion matrix: repeatedly pair the largest
/// remaining cell's row and column.
fn best_agreement_greedy(c: &[Vec<usize>]) -> usize {
    let k = c.len();
    let mut row_used = vec![false; k];
    let mut col_used = vec![false; k];
    let mut total = 0;
    for _ in 0..k {
        let mut best: Option<(usize, usize, usize)> = None;
        for a in (0..k).filter(|&a| !row_used[a]) {
            for b in (0..k).filter(|&b| !col_used[b]) {
                if best.is_none_or(|(v, _, _)| c[a][b] > v) {
                    best = Some((c[a][b], a, b));
                }
            }
        }
        let (v, a, b) = best.expect("k unmatched pairs remain");
        row_used[a] = true;
        col_used[b] = true;
        total += v;
    }
    total
}

/// Percentage of series whose predicted cluster disagrees with the
/// reference, after relabeling the prediction to best match the reference.
/// Labels are 0-based and must be below `clusters`. The alignment is exact
/// for up to 8 clusters and greedy beyond.
pub fn misclassification_pct(true_labels: &[usize], predicted: &[usize], clusters: usize) -> Result<f64, DataError> {
    let c = confusion(true_labels, predicted, clusters)?;
    let n = true_labels.len();
    if n == 0 {
        return Ok(0.0);
    }
    let agree = if clusters <= 8 { best_agreement_exact(&c) } else { best_agreement_greedy(&c) };
    Ok(100.0 * (n - agree) as f64 / n as f64)
}

/// Rounds a percentage to two decimals for reporting.
pub fn round_pct(value: f64) -> f64 {
    (value * 100.0).round() / 100.0
}

/// `sum_i ||x_i - c_{z_i}||^2` for partition `z` and cluster mean series `c`.
pub fn intra_cluster_inertia(data: &TimeSeriesDataset, partition: &[usize], means: &[Vec<f64>]) -> Result<f64, DataError> {
    if partition.len() != data.n() {
        return Err(DataError::DimensionMismatch { expected: data.n(), found: partition.len() });
    }
    if let Some(c) = means.iter().find(|c| c.len() != data.m()) {
        return Err(DataError::DimensionMismatch { expected: data.m(), found: c.len() });
    }
    let mut total = 0.0;
    for (x, &z) in data.series().iter().zip(partition) {
        let c = means.get(z).ok_or(DataError::LabelOutOfRange { label: z + 1, clusters: means.len() })?;
        total += x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total)
}
