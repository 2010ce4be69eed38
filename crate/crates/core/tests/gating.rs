mod common;

use common::{gate_probs, rng};
use hpr_core::gating::{gating_gradient, gating_objective, irls_fit, GatingParameters, IrlsProblem};
use proptest::prelude::*;
use rand::Rng;

fn objective_oracle(pairs: &[[f64; 2]], times: &[f64], w: &[Vec<f64>]) -> f64 {
    times.iter().zip(w).map(|(&t, row)| gate_probs(pairs, t).iter().zip(row).map(|(p, wl)| wl * p.ln()).sum::<f64>()).sum()
}

#[test]
fn objective_matches_scalar_sum_over_series() {
    let mut g = rng(20);
    let times = vec![0.0, 0.5, 1.0];
    // n = 2 series, m = 3 points, L = 2 regimes.
    let per_series: Vec<Vec<Vec<f64>>> =
        (0..2).map(|_| (0..3).map(|_| (0..2).map(|_| g.random_range(0.0..1.0)).collect()).collect()).collect();
    let problem = IrlsProblem::from_series_weights(times.clone(), &per_series).unwrap();
    let alpha = GatingParameters::from_free(&[0.7, -1.3]).unwrap();
    let mut want = 0.0;
    for s in &per_series {
        want += objective_oracle(alpha.pairs(), &times, s);
    }
    assert!((gating_objective(&alpha, &problem) - want).abs() <= 1e-12 * want.abs());
}

#[test]
fn gradient_at_fitted_point_matches_central_differences() {
    let mut g = rng(21);
    for _ in 0..20 {
        let m = 15;
        let times: Vec<f64> = (0..m).map(|j| j as f64 / (m - 1) as f64).collect();
        let weights: Vec<f64> = (0..m * 3).map(|_| g.random_range(0.0..2.0)).collect();
        let problem = IrlsProblem::new(times, 3, weights).unwrap();
        let (fitted, _) = irls_fit(&problem, &GatingParameters::zeros(3)).unwrap();
        // Perturb away from the stationary point so the gradient is not ~0.
        let at: Vec<f64> = fitted.free_params().iter().map(|v| v + g.random_range(-0.5..0.5)).collect();
        let grad = gating_gradient(&GatingParameters::from_free(&at).unwrap(), &problem);
        let h = 1e-5;
        for d in 0..at.len() {
            let (mut up, mut dn) = (at.clone(), at.clone());
            up[d] += h;
            dn[d] -= h;
            let fd = (gating_objective(&GatingParameters::from_free(&up).unwrap(), &problem)
                - gating_objective(&GatingParameters::from_free(&dn).unwrap(), &problem))
                / (2.0 * h);
            let scale = grad[d].abs().max(fd.abs()).max(1e-8);
            assert!((grad[d] - fd).abs() / scale <= 1e-5, "dim {d}: {} vs {fd}", grad[d]);
        }
    }
}

#[test]
fn separable_crossover_agrees_with_grid_search() {
    let m = 40;
    let times: Vec<f64> = (1..=m).map(|j| j as f64).collect();
    let t_star = 17.5;
    let weights: Vec<f64> = times.iter().flat_map(|&t| if t < t_star { [1.0, 0.0] } else { [0.0, 1.0] }).collect();
    let problem = IrlsProblem::new(times, 2, weights).unwrap();
    let (fitted, _) = irls_fit(&problem, &GatingParameters::zeros(2)).unwrap();
    let [a0, a1] = fitted.pairs()[0];
    let crossover = -a0 / a1;
    assert!((crossover - t_star).abs() <= 1.0, "IRLS crossover {crossover}");

    // Dense search over slope and crossover location, alpha = (-s c, s).
    let mut best = (f64::NEG_INFINITY, 0.0);
    for si in 1..=60 {
        let s = -0.25 * si as f64;
        for ci in 0..=400 {
            let c = 1.0 + 0.1 * ci as f64;
            let alpha = GatingParameters::from_free(&[-s * c, s]).unwrap();
            let v = gating_objective(&alpha, &problem);
            if v > best.0 {
                best = (v, c);
            }
        }
    }
    assert!((best.1 - t_star).abs() <= 1.0, "grid-search crossover {}", best.1);
    assert!((crossover - best.1).abs() <= 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn proportions_sum_to_one_and_ignore_common_shifts(
        free in prop::collection::vec(-50.0f64..50.0, 4),
        t in -10.0f64..10.0,
        shift in prop::array::uniform2(-100.0f64..100.0),
    ) {
        let gate = GatingParameters::from_free(&free).unwrap();
        let p = gate.logistic_proportions(t);
        let sum: f64 = p.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let shifted: Vec<[f64; 2]> = gate.pairs().iter().map(|a| [a[0] + shift[0], a[1] + shift[1]]).collect();
        let q = GatingParameters::pinned_from_pairs(&shifted).unwrap().logistic_proportions(t);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
