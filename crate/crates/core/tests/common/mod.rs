#![allow(dead_code)]

use hpr_core::gating::GatingParameters;
use hpr_core::{HprMixtureModel, ModelStructure, TimeGrid, TimeScale, TimeSeriesDataset, VarianceMode};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Series on the grid `1..=m`: a random step pattern plus unit-scale noise.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, m: usize) -> TimeSeriesDataset {
    let grid = TimeGrid::index(m).unwrap();
    let series = (0..n)
        .map(|_| {
            let level: f64 = rng.random_range(-5.0..5.0);
            let jump: f64 = rng.random_range(-5.0..5.0);
            let cut = rng.random_range(1..m);
            (0..m).map(|j| level + if j >= cut { jump } else { 0.0 } + rng.random_range(-1.0..1.0)).collect()
        })
        .collect();
    TimeSeriesDataset::new(grid, series).unwrap()
}

/// A valid model with random parameters of moderate size.
pub fn random_model(rng: &mut ChaCha8Rng, structure: ModelStructure, scale: TimeScale) -> HprMixtureModel {
    let (kk, ll, p) = (structure.clusters, structure.segments, structure.degree);
    let mut props: Vec<f64> = (0..kk).map(|_| rng.random_range(0.2..1.0)).collect();
    let s: f64 = props.iter().sum();
    props.iter_mut().for_each(|x| *x /= s);
    let one_gate = |rng: &mut ChaCha8Rng| {
        let free: Vec<f64> = (0..2 * (ll - 1)).map(|_| rng.random_range(-3.0..3.0)).collect();
        GatingParameters::from_free(&free).unwrap()
    };
    let gating = match structure.gating_mode {
        hpr_core::GatingMode::PerCluster => (0..kk).map(|_| one_gate(rng)).collect(),
        hpr_core::GatingMode::Shared => vec![one_gate(rng); kk],
    };
    let coefficients = (0..kk)
        .map(|_| (0..ll).map(|_| (0..=p).map(|_| rng.random_range(-3.0..3.0)).collect()).collect())
        .collect();
    let variances = (0..structure.variance_count()).map(|_| rng.random_range(0.5..2.0)).collect();
    HprMixtureModel::new(structure, scale, props, gating, coefficients, variances).unwrap()
}

pub fn all_structures(k: usize, l: usize, p: usize) -> Vec<ModelStructure> {
    let base = ModelStructure::new(k, l, p);
    vec![
        base,
        base.with_variance_mode(VarianceMode::CommonPerCluster),
        base.with_variance_mode(VarianceMode::CommonGlobal),
        base.with_gating_mode(hpr_core::GatingMode::Shared),
    ]
}

/// Polynomial value by explicit powers.
pub fn poly(beta: &[f64], t: f64) -> f64 {
    beta.iter().enumerate().map(|(d, b)| b * t.powi(d as i32)).sum()
}

/// Gate proportions computed directly from the exponentials.
pub fn gate_probs(pairs: &[[f64; 2]], t: f64) -> Vec<f64> {
    let e: Vec<f64> = pairs.iter().map(|a| (a[0] + a[1] * t).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// `pi_kl(t_j) N(x_ij; mu, var)` with no log-space tricks; only for small,
/// well-scaled instances.
pub fn joint_term(model: &HprMixtureModel, k: usize, l: usize, t: f64, x: f64) -> f64 {
    let u = model.time_scale().apply(t);
    gate_probs(model.gating(k).pairs(), u)[l] * normal_pdf(x, poly(model.coefficients(k, l), u), model.variance(k, l))
}

/// Component density `f_k(x)` as a plain product of sums.
pub fn density(model: &HprMixtureModel, k: usize, x: &[f64], grid: &TimeGrid) -> f64 {
    let ll = model.structure().segments;
    grid.times()
        .iter()
        .zip(x)
        .map(|(&t, &xj)| (0..ll).map(|l| joint_term(model, k, l, t, xj)).sum::<f64>())
        .product()
}
