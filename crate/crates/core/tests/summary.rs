use hpr_core::gating::GatingParameters;
use hpr_core::hpr::{mean_series, segment};
use hpr_core::{HprMixtureModel, ModelStructure, TimeGrid, TimeScale};

fn table1_cluster1() -> HprMixtureModel {
    HprMixtureModel::new(
        ModelStructure::new(1, 3, 0),
        TimeScale::IDENTITY,
        vec![1.0],
        vec![GatingParameters::pinned_from_pairs(&[[1039.0, -34.4], [677.0, -16.7], [0.0, 0.0]]).unwrap()],
        vec![vec![vec![10.0], vec![20.0], vec![30.0]]],
        vec![1.0; 3],
    )
    .unwrap()
}

#[test]
fn gated_mean_saturates_at_the_last_regime() {
    let grid = TimeGrid::new(vec![54.0, 55.0]).unwrap();
    let c = mean_series(&table1_cluster1(), 0, &grid);
    assert!((c[1] - 30.0).abs() < 1e-6, "{}", c[1]);
}

#[test]
fn table1_segments_break_near_the_score_crossovers() {
    let grid = TimeGrid::index(60).unwrap();
    let seg = segment(&table1_cluster1(), 0, &grid).unwrap();
    let segs = seg.ordered_segments();
    assert_eq!(segs.iter().map(|s| s.0).collect::<Vec<_>>(), vec![0, 1, 2]);
    let t = grid.times();
    let b1 = 0.5 * (t[segs[0].2] + t[segs[1].1]);
    let b2 = 0.5 * (t[segs[1].2] + t[segs[2].1]);
    let c1 = (1039.0 - 677.0) / (34.4 - 16.7);
    let c2 = 677.0 / 16.7;
    assert!((b1 - c1).abs() <= 0.5 && (b2 - c2).abs() <= 0.5, "{b1} {b2}");
    assert_eq!(seg.regime_changes(), 2);
}

#[test]
fn uniform_and_single_regime_gates() {
    let grid = TimeGrid::index(9).unwrap();
    let scale = TimeScale::unit_interval(&grid);
    let two = HprMixtureModel::new(
        ModelStructure::new(1, 2, 1),
        scale,
        vec![1.0],
        vec![GatingParameters::zeros(2)],
        vec![vec![vec![1.0, 2.0], vec![3.0, -2.0]]],
        vec![1.0, 1.0],
    )
    .unwrap();
    let c = mean_series(&two, 0, &grid);
    for (&t, v) in grid.times().iter().zip(&c) {
        let u = scale.apply(t);
        assert!((v - 0.5 * ((1.0 + 2.0 * u) + (3.0 - 2.0 * u))).abs() <= 1e-12);
    }
    let seg = segment(&two, 0, &grid).unwrap();
    assert_eq!(seg.intervals, vec![Some((0, 8)), None]);

    let one = HprMixtureModel::new(ModelStructure::new(1, 1, 1), scale, vec![1.0], vec![GatingParameters::zeros(1)], vec![vec![vec![1.0, 2.0]]], vec![1.0])
        .unwrap();
    let c = mean_series(&one, 0, &grid);
    for (&t, v) in grid.times().iter().zip(&c) {
        assert!((v - (1.0 + 2.0 * scale.apply(t))).abs() <= 1e-12);
    }
    assert_eq!(segment(&one, 0, &grid).unwrap().intervals, vec![Some((0, 8))]);
}
