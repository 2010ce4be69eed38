//! Simulation of labeled time series from a mixture whose cluster means are
//! either single polynomials or logistic-gated sums of polynomials.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::eval_polynomial;
use crate::error::DataError;
use crate::gating::GatingParameters;
use crate::types::{TimeGrid, TimeSeriesDataset};

/// Mean structure and noise of one simulated cluster. Time is used on its
/// raw scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClusterSpec {
    /// `L` polynomial regimes mixed by a logistic gate. `gating` holds one
    /// `(intercept, slope)` pair per regime; `noise_variance` holds either a
    /// single value or one per regime.
    Gated { gating: Vec<[f64; 2]>, coefficients: Vec<Vec<f64>>, noise_variance: Vec<f64> },
    /// One polynomial over the whole series.
    Plain { coefficients: Vec<f64>, noise_variance: f64 },
}

impl ClusterSpec {
    fn gate(&self) -> Option<GatingParameters> {
        match self {
            ClusterSpec::Gated { gating, .. } => GatingParameters::pinned_from_pairs(gating).ok(),
            ClusterSpec::Plain { .. } => None,
        }
    }

    fn regime_variance(&self, l: usize) -> f64 {
        match self {
            ClusterSpec::Gated { noise_variance, .. } => {
                if noise_variance.len() == 1 {
                    noise_variance[0]
                } else {
                    noise_variance[l]
                }
            }
            ClusterSpec::Plain { noise_variance, .. } => *noise_variance,
        }
    }

    fn validate(&self, index: usize) -> Result<(), DataError> {
        let bad = |msg: &str| Err(DataError::InvalidModel(format!("cluster {}: {msg}", index + 1)));
        match self {
            ClusterSpec::Gated { gating, coefficients, noise_variance } => {
                if gating.is_empty() || gating.len() != coefficients.len() {
                    return bad("gating and coefficient lists must be nonempty and of equal length");
                }
                if noise_variance.len() != 1 && noise_variance.len() != gating.len() {
                    return bad("noise_variance needs one value or one per regime");
                }
                if !noise_variance.iter().all(|v| v.is_finite() && *v >= 0.0) {
                    return bad("noise variances must be finite and nonnegative");
                }
                if coefficients.iter().any(|c| c.is_empty()) || !gating.iter().flatten().chain(coefficients.iter().flatten()).all(|x| x.is_finite()) {
                    return bad("parameters must be finite and every regime needs a coefficient");
                }
            }
            ClusterSpec::Plain { coefficients, noise_variance } => {
                if coefficients.is_empty() || !coefficients.iter().all(|x| x.is_finite()) {
                    return bad("coefficients must be nonempty and finite");
                }
                if !(noise_variance.is_finite() && *noise_variance >= 0.0) {
                    return bad("noise variance must be finite and nonnegative");
                }
            }
        }
        Ok(())
    }
}

/// How gated clusters produce observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RegimeSampling {
    /// Gate-weighted mean curve plus Gaussian noise.
    #[default]
    DeterministicMean,
    /// Draw a regime per point from the gate proportions, then that regime's
    /// polynomial plus its noise.
    PerPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeSpec {
    pub n: usize,
    pub grid: Vec<f64>,
    pub clusters: Vec<ClusterSpec>,
    pub proportions: Vec<f64>,
    #[serde(default)]
    pub sampling: RegimeSampling,
    #[serde(default)]
    pub seed: u64,
}

impl GenerativeSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        TimeGrid::new(self.grid.clone())?;
        if self.n == 0 {
            return Err(DataError::EmptyDataset);
        }
        if self.clusters.is_empty() || self.clusters.len() != self.proportions.len() {
            return Err(DataError::InvalidModel("need one proportion per cluster and at least one cluster".into()));
        }
        if !self.proportions.iter().all(|p| p.is_finite() && *p >= 0.0) || (self.proportions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidModel("proportions must be nonnegative and sum to 1".into()));
        }
        for (k, c) in self.clusters.iter().enumerate() {
            c.validate(k)?;
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_sampling(mut self, sampling: RegimeSampling) -> Self {
        self.sampling = sampling;
        self
    }

    /// Expected value of cluster `k` at time `t`.
    pub fn mean_at(&self, k: usize, t: f64) -> f64 {
        match &self.clusters[k] {
            ClusterSpec::Plain { coefficients, .. } => eval_polynomial(coefficients, t),
            c @ ClusterSpec::Gated { coefficients, .. } => {
                let pi = c.gate().expect("validated").logistic_proportions(t);
                pi.iter().zip(coefficients).map(|(p, b)| p * eval_polynomial(b, t)).sum()
            }
        }
    }

    /// Mean curve of cluster `k` on the spec's grid.
    pub fn mean_curve(&self, k: usize) -> Vec<f64> {
        self.grid.iter().map(|&t| self.mean_at(k, t)).collect()
    }
}

/// Regime label of every point of every series (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenProcessAssignment {
    pub labels: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub dataset: TimeSeriesDataset,
    /// Cluster of each series (0-based).
    pub labels: Vec<usize>,
    /// Present only for per-point regime sampling.
    pub hidden: Option<HiddenProcessAssignment>,
}

fn categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Draws `spec.n` labeled series. Series `i` uses its own random stream
/// derived from the seed, so each series is independent of generation order.
pub fn generate(spec: &GenerativeSpec) -> Result<GeneratedData, DataError> {
    spec.validate()?;
    let grid = TimeGrid::new(spec.grid.clone())?;
    let gates: Vec<Option<GatingParameters>> = spec.clusters.iter().map(ClusterSpec::gate).collect();
    let mut series = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    let mut hidden = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let k = categorical(&mut rng, &spec.proportions);
        let cluster = &spec.clusters[k];
        let mut x = Vec::with_capacity(grid.len());
        let mut w = Vec::with_capacity(grid.len());
        for &t in grid.times() {
            let eps: f64 = StandardNormal.sample(&mut rng);
            let value = match (cluster, &gates[k]) {
                (ClusterSpec::Gated { coefficients, .. }, Some(gate)) => {
                    let pi = gate.logistic_proportions(t);
                    match spec.sampling {
                        RegimeSampling::PerPoint => {
                            let l = categorical(&mut rng, &pi);
                            w.push(l);
                            eval_polynomial(&coefficients[l], t) + cluster.regime_variance(l).sqrt() * eps
                        }
                        RegimeSampling::DeterministicMean => {
                            let mean: f64 = pi.iter().zip(coefficients).map(|(p, b)| p * eval_polynomial(b, t)).sum();
                            let var: f64 = pi.iter().enumerate().map(|(l, p)| p * cluster.regime_variance(l)).sum();
                            mean + var.sqrt() * eps
                        }
                    }
                }
                (ClusterSpec::Plain { coefficients, noise_variance }, _) => {
                    w.push(0);
                    eval_polynomial(coefficients, t) + noise_variance.sqrt() * eps
                }
                (ClusterSpec::Gated { .. }, None) => unreachable!("validated gate"),
            };
            x.push(value);
        }
        series.push(x);
        labels.push(k);
        hidden.push(w);
    }
    let hidden = match spec.sampling {
        RegimeSampling::PerPoint => Some(HiddenProcessAssignment { labels: hidden }),
        RegimeSampling::DeterministicMean => None,
    };
    Ok(GeneratedData { dataset: TimeSeriesDataset::new(grid, series)?, labels, hidden })
}

/// Two-cluster simulation design: 50 series on the grid `1..=60` with equal
/// proportions. Cluster 1 switches between the constant levels 10, 20 and 30
/// through a logistic gate; cluster 2 follows one degree-8 polynomial. Both
/// use noise variance `sigma2`.
pub fn table1_spec(sigma2: f64) -> Result<GenerativeSpec, DataError> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(DataError::InvalidModel(format!("noise variance must be positive, got {sigma2}")));
    }
    Ok(GenerativeSpec {
        n: 50,
        grid: (1..=60).map(|j| j as f64).collect(),
        clusters: vec![
            ClusterSpec::Gated {
                gating: vec![[1039.0, -34.4], [677.0, -16.7], [0.0, 0.0]],
                coefficients: vec![vec![10.0], vec![20.0], vec![30.0]],
                noise_variance: vec![sigma2],
            },
            ClusterSpec::Plain {
                coefficients: vec![7.4, 1.9, -0.3, -2e-3, 2e-4, -1.3e-4, 3.2e-6, -3.7e-8, 1.6e-10],
                noise_variance: sigma2,
            },
        ],
        proportions: vec![0.5, 0.5],
        sampling: RegimeSampling::DeterministicMean,
        seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_parameters() {
        let spec = table1_spec(1.0).unwrap();
        assert_eq!(spec.n, 50);
        assert_eq!(spec.grid.len(), 60);
        match &spec.clusters[0] {
            ClusterSpec::Gated { gating, coefficients, .. } => {
                assert_eq!(coefficients, &vec![vec![10.0], vec![20.0], vec![30.0]]);
                assert_eq!(gating[2], [0.0, 0.0]);
            }
            _ => panic!("cluster 1 is gated"),
        }
        match &spec.clusters[1] {
            ClusterSpec::Plain { coefficients, .. } => assert_eq!(coefficients.len(), 9),
            _ => panic!("cluster 2 is plain"),
        }
        assert!(table1_spec(0.0).is_err());
    }

    #[test]
    fn noiseless_plain_cluster_is_its_polynomial() {
        let spec = GenerativeSpec {
            n: 3,
            grid: vec![0.0, 1.0, 2.0],
            clusters: vec![ClusterSpec::Plain { coefficients: vec![1.0, 2.0], noise_variance: 0.0 }],
            proportions: vec![1.0],
            sampling: RegimeSampling::DeterministicMean,
            seed: 9,
        };
        let g = generate(&spec).unwrap();
        for s in g.dataset.series() {
            assert_eq!(s, &vec![1.0, 3.0, 5.0]);
        }
    }

    #[test]
    fn same_seed_same_data() {
        let spec = table1_spec(1.0).unwrap().with_seed(7);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = generate(&spec.clone().with_seed(8)).unwrap();
        assert_ne!(generate(&spec).unwrap().dataset, other.dataset);
    }

    #[test]
    fn series_streams_do_not_depend_on_n() {
        let a = generate(&table1_spec(1.0).unwrap().with_n(5)).unwrap();
        let b = generate(&table1_spec(1.0).unwrap().with_n(20)).unwrap();
        assert_eq!(&a.dataset.series()[..], &b.dataset.series()[..5]);
        assert_eq!(a.labels[..], b.labels[..5]);
    }

    #[test]
    fn gated_mean_saturates_at_last_level() {
        let spec = table1_spec(1.0).unwrap();
        assert!((spec.mean_at(0, 55.0) - 30.0).abs() < 1e-9);
        assert!((spec.mean_at(0, 5.0) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = table1_spec(1.0).unwrap();
        spec.proportions = vec![0.7, 0.7];
        assert!(generate(&spec).is_err());
        let mut spec = table1_spec(1.0).unwrap();
        spec.grid = vec![1.0, 1.0];
        assert!(generate(&spec).is_err());
    }
}
