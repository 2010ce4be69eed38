//! Small numerical helpers shared by the density code.

use std::f64::consts::PI;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log(sum(exp(values)))` via max subtraction. Returns `-inf` for an empty
/// slice or when every entry is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Normalizes log-weights in place into probabilities and returns the
/// log normalizer.
pub fn softmax_in_place(values: &mut [f64]) -> f64 {
    let lse = log_sum_exp(values);
    for v in values.iter_mut() {
        *v = (*v - lse).exp();
    }
    lse
}

/// Log density of `N(mean, variance)` at `x`.
#[inline]
pub fn log_normal(x: f64, mean: f64, variance: f64) -> f64 {
    let r = x - mean;
    -0.5 * (LN_2PI + variance.ln()) - r * r / (2.0 * variance)
}

/// Log density of an isotropic Gaussian `N(mean, variance * I)` evaluated at
/// `x`, given the squared residual norm and the dimension.
#[inline]
pub fn log_isotropic_normal(sq_residual: f64, dim: usize, variance: f64) -> f64 {
    -0.5 * dim as f64 * (2.0 * PI * variance).ln() - sq_residual / (2.0 * variance)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Population variance of every value across all series.
pub fn pooled_variance<'a, I>(series: I) -> f64
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut count = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for s in series {
        for &x in s {
            count += 1;
            let delta = x - mean;
            mean += delta / count as f64;
            m2 += delta * (x - mean);
        }
    }
    if count == 0 {
        0.0
    } else {
        m2 / count as f64
    }
}
