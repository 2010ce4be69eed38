mod common;

use common::{random_dataset, rng};
use hpr_core::metrics::{intra_cluster_inertia, misclassification_pct};
use rand::Rng;

/// Minimum disagreement over all relabelings of the prediction.
fn brute_force(truth: &[usize], pred: &[usize], k: usize) -> f64 {
    fn perms(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }
    let best = perms(k)
        .into_iter()
        .map(|p| truth.iter().zip(pred).filter(|(t, q)| p[**q] != **t).count())
        .min()
        .unwrap();
    100.0 * best as f64 / truth.len() as f64
}

#[test]
fn misclassification_matches_permutation_search_and_is_symmetric() {
    let mut g = rng(40);
    for _ in 0..200 {
        let k = g.random_range(1..=4);
        let n = g.random_range(1..30);
        let truth: Vec<usize> = (0..n).map(|_| g.random_range(0..k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| g.random_range(0..k)).collect();
        let got = misclassification_pct(&truth, &pred, k).unwrap();
        assert!((got - brute_force(&truth, &pred, k)).abs() < 1e-12);
        assert!((got - misclassification_pct(&pred, &truth, k).unwrap()).abs() < 1e-12);
        assert!((0.0..=100.0).contains(&got));
        let relabel: Vec<usize> = pred.iter().map(|&p| (p + 1) % k).collect();
        assert!((got - misclassification_pct(&truth, &relabel, k).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn inertia_matches_double_loop_and_closed_forms() {
    let mut g = rng(41);
    let data = random_dataset(&mut g, 7, 9);
    let means: Vec<Vec<f64>> = (0..3).map(|_| (0..9).map(|_| g.random_range(-3.0..3.0)).collect()).collect();
    let partition: Vec<usize> = (0..7).map(|_| g.random_range(0..3)).collect();
    let mut want = 0.0;
    for i in 0..7 {
        for j in 0..9 {
            let d = data.series()[i][j] - means[partition[i]][j];
            want += d * d;
        }
    }
    assert!((intra_cluster_inertia(&data, &partition, &means).unwrap() - want).abs() <= 1e-12 * want);

    let x = data.series()[0].clone();
    let single = hpr_core::TimeSeriesDataset::new(data.grid().clone(), vec![x.clone()]).unwrap();
    let shifted: Vec<f64> = x.iter().map(|v| v + 1.5).collect();
    assert!((intra_cluster_inertia(&single, &[0], &[shifted]).unwrap() - 9.0 * 2.25).abs() < 1e-12);
    assert_eq!(intra_cluster_inertia(&single, &[0], &[x]).unwrap(), 0.0);
}
