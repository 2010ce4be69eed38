mod common;

use approx::assert_relative_eq;
use common::{normal_pdf, poly, random_dataset, rng};
use hpr_core::design::DesignMatrix;
use hpr_core::hpr::map_partition;
use hpr_core::metrics::misclassification_pct;
use hpr_core::reg_mixture::{regmix_fit_em, regmix_log_density, regmix_log_likelihood, regmix_posteriors};
use hpr_core::synthetic::{generate, ClusterSpec, GenerativeSpec, RegimeSampling};
use hpr_core::{FitOptions, RegMixtureModel, TimeScale};
use nalgebra::{DMatrix, DVector};

#[test]
fn single_cluster_fit_is_pooled_least_squares() {
    let mut g = rng(30);
    let data = random_dataset(&mut g, 6, 25);
    let (model, report) = regmix_fit_em(&data, 1, 3, &FitOptions { restarts: 2, ..FitOptions::default() }).unwrap();
    assert!(report.converged);
    let scale = model.time_scale();
    let u: Vec<f64> = data.grid().times().iter().map(|&t| scale.apply(t)).collect();
    let rows = data.n() * data.m();
    let a = DMatrix::from_fn(rows, 4, |r, c| u[r % data.m()].powi(c as i32));
    let y = DVector::from_iterator(rows, data.series().iter().flatten().copied());
    let beta = a.clone().svd(true, true).solve(&y, 1e-14).unwrap();
    let var = (&y - &a * &beta).norm_squared() / rows as f64;
    for (x, b) in model.coefficients(0).iter().zip(beta.iter()) {
        assert!((x - b).abs() <= 1e-8);
    }
    assert_relative_eq!(model.variance(0), var, max_relative = 1e-9);
}

#[test]
fn well_separated_constant_clusters_are_recovered() {
    let spec = GenerativeSpec {
        n: 40,
        grid: (1..=30).map(f64::from).collect(),
        clusters: vec![
            ClusterSpec::Plain { coefficients: vec![-10.0], noise_variance: 1.0 },
            ClusterSpec::Plain { coefficients: vec![10.0], noise_variance: 1.0 },
        ],
        proportions: vec![0.5, 0.5],
        sampling: RegimeSampling::DeterministicMean,
        seed: 4,
    };
    let generated = generate(&spec).unwrap();
    let (_, report) = regmix_fit_em(&generated.dataset, 2, 0, &FitOptions { restarts: 5, ..FitOptions::default() }).unwrap();
    let partition = map_partition(&report.posteriors.r_matrix());
    assert_eq!(misclassification_pct(&generated.labels, &partition, 2).unwrap(), 0.0);
    for w in report.loglik_trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-8);
    }
}

#[test]
fn log_density_and_posteriors_match_direct_computation() {
    let mut g = rng(31);
    let data = random_dataset(&mut g, 5, 6);
    let scale = TimeScale::unit_interval(data.grid());
    let model = RegMixtureModel::new(1, scale, vec![0.3, 0.7], vec![vec![1.0, 2.0], vec![-1.0, 0.5]], vec![1.2, 0.8]).unwrap();
    let design = DesignMatrix::from_times(&scale.transform(data.grid()), 1).unwrap();
    let post = regmix_posteriors(&model, &data).unwrap();
    let mut ll = 0.0;
    for (i, x) in data.series().iter().enumerate() {
        let f: Vec<f64> = (0..2)
            .map(|k| {
                data.grid().times().iter().zip(x).map(|(&t, &v)| normal_pdf(v, poly(model.coefficients(k), scale.apply(t)), model.variance(k))).product()
            })
            .collect();
        assert_relative_eq!(regmix_log_density(&RegMixtureModel::new(1, scale, vec![1.0], vec![model.coefficients(0).to_vec()], vec![1.2]).unwrap(), x, &design), f[0].ln(), max_relative = 1e-12);
        let joint: Vec<f64> = (0..2).map(|k| model.proportions()[k] * f[k]).collect();
        let total: f64 = joint.iter().sum();
        for k in 0..2 {
            assert_relative_eq!(post[i][k], joint[k] / total, max_relative = 1e-10);
        }
        ll += total.ln();
    }
    assert_relative_eq!(regmix_log_likelihood(&model, &data).unwrap(), ll, max_relative = 1e-12);
}

#[test]
fn symmetric_model_gives_even_posteriors_at_the_midpoint() {
    let grid = hpr_core::TimeGrid::index(4).unwrap();
    let data = hpr_core::TimeSeriesDataset::new(grid, vec![vec![0.0; 4]]).unwrap();
    let model = RegMixtureModel::new(0, TimeScale::IDENTITY, vec![0.5, 0.5], vec![vec![2.0], vec![-2.0]], vec![1.0, 1.0]).unwrap();
    let post = regmix_posteriors(&model, &data).unwrap();
    assert!((post[0][0] - 0.5).abs() <= 1e-15 && (post[0][1] - 0.5).abs() <= 1e-15);
    let one = RegMixtureModel::new(0, TimeScale::IDENTITY, vec![1.0], vec![vec![2.0]], vec![1.0]).unwrap();
    assert_eq!(regmix_posteriors(&one, &data).unwrap(), vec![vec![1.0]]);
}

#[test]
fn zero_residual_density_is_the_normalizing_constant() {
    let grid = hpr_core::TimeGrid::index(5).unwrap();
    let model = RegMixtureModel::new(1, TimeScale::IDENTITY, vec![1.0], vec![vec![0.5, 2.0]], vec![1.0]).unwrap();
    let x: Vec<f64> = grid.times().iter().map(|&t| 0.5 + 2.0 * t).collect();
    let design = DesignMatrix::from_times(grid.times(), 1).unwrap();
    let want = -2.5 * (2.0 * std::f64::consts::PI).ln();
    assert_relative_eq!(regmix_log_density(&model, &x, &design), want, max_relative = 1e-14);
}
