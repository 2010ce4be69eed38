//! Shared data model: time grids, datasets, model structures and parameter
//! sets, and the report produced by an EM fit.

use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::gating::GatingParameters;

/// Strictly increasing sequence of at least two time stamps shared by all
/// series of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid(Vec<f64>);

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self, DataError> {
        validate_grid(&times)?;
        Ok(Self(times))
    }

    /// The grid `1, 2, ..., m`.
    pub fn index(m: usize) -> Result<Self, DataError> {
        Self::new((1..=m).map(|j| j as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.0
    }

    pub fn first(&self) -> f64 {
        self.0[0]
    }

    pub fn last(&self) -> f64 {
        self.0[self.0.len() - 1]
    }
}

fn validate_grid(times: &[f64]) -> Result<(), DataError> {
    if times.len() < 2 {
        return Err(DataError::GridTooShort(times.len()));
    }
    for (j, t) in times.iter().enumerate() {
        if !t.is_finite() {
            return Err(DataError::NonFiniteTime { position: j + 1 });
        }
    }
    for j in 1..times.len() {
        if times[j] <= times[j - 1] {
            return Err(DataError::NonMonotonicGrid { position: j + 1 });
        }
    }
    Ok(())
}

/// Affine map `u = (t - offset) / scale` applied to the time axis before
/// polynomial and gating evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeScale {
    pub offset: f64,
    pub scale: f64,
}

impl TimeScale {
    pub const IDENTITY: TimeScale = TimeScale { offset: 0.0, scale: 1.0 };

    /// Maps the first grid point to 0 and the last to 1.
    pub fn unit_interval(grid: &TimeGrid) -> Self {
        TimeScale { offset: grid.first(), scale: grid.last() - grid.first() }
    }

    pub fn for_grid(grid: &TimeGrid, normalize: bool) -> Self {
        if normalize {
            Self::unit_interval(grid)
        } else {
            Self::IDENTITY
        }
    }

    #[inline]
    pub fn apply(&self, t: f64) -> f64 {
        (t - self.offset) / self.scale
    }

    #[inline]
    pub fn invert(&self, u: f64) -> f64 {
        u * self.scale + self.offset
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    pub fn transform(&self, grid: &TimeGrid) -> Vec<f64> {
        grid.times().iter().map(|&t| self.apply(t)).collect()
    }
}

/// `n` series of equal length observed on one shared grid.
///
/// Ground-truth labels are deliberately not part of this type; they travel
/// separately and only the evaluation code reads them.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    grid: TimeGrid,
    series: Vec<Vec<f64>>,
}

impl TimeSeriesDataset {
    pub fn new(grid: TimeGrid, series: Vec<Vec<f64>>) -> Result<Self, DataError> {
        validate_dataset(grid.times(), &series)?;
        Ok(Self { grid, series })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn series(&self) -> &[Vec<f64>] {
        &self.series
    }

    /// Number of series `n`.
    pub fn n(&self) -> usize {
        self.series.len()
    }

    /// Series length `m`.
    pub fn m(&self) -> usize {
        self.grid.len()
    }

    pub fn pooled_variance(&self) -> f64 {
        crate::stats::pooled_variance(self.series.iter().map(Vec::as_slice))
    }

    /// Lower bound applied to every fitted variance.
    pub fn variance_floor(&self) -> f64 {
        let v = self.pooled_variance();
        if v > 0.0 {
            1e-8 * v
        } else {
            1e-12
        }
    }
}

/// Checks the grid and every series, reporting the first violation found.
pub fn validate_dataset(grid: &[f64], series: &[Vec<f64>]) -> Result<(), DataError> {
    validate_grid(grid)?;
    if series.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let m = grid.len();
    for (i, s) in series.iter().enumerate() {
        if s.len() != m {
            return Err(DataError::RaggedSeries { series: i + 1, expected: m, found: s.len() });
        }
        if let Some(j) = s.iter().position(|x| !x.is_finite()) {
            return Err(DataError::NonFiniteValue { series: i + 1, position: j + 1 });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// One variance per (cluster, regime).
    #[default]
    Free,
    /// One variance per cluster, shared by its regimes.
    CommonPerCluster,
    /// A single variance for every regime of every cluster.
    CommonGlobal,
}

impl VarianceMode {
    pub fn variance_count(self, clusters: usize, segments: usize) -> usize {
        match self {
            VarianceMode::Free => clusters * segments,
            VarianceMode::CommonPerCluster => clusters,
            VarianceMode::CommonGlobal => 1,
        }
    }

    #[inline]
    pub fn variance_index(self, k: usize, l: usize, segments: usize) -> usize {
        match self {
            VarianceMode::Free => k * segments + l,
            VarianceMode::CommonPerCluster => k,
            VarianceMode::CommonGlobal => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GatingMode {
    /// Each cluster has its own logistic gate.
    #[default]
    PerCluster,
    /// One logistic gate (hence one segmentation) shared by every cluster.
    Shared,
}

/// Structural choices of a hidden-process regression mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelStructure {
    pub clusters: usize,
    pub segments: usize,
    pub degree: usize,
    #[serde(default)]
    pub variance_mode: VarianceMode,
    #[serde(default)]
    pub gating_mode: GatingMode,
}

impl ModelStructure {
    pub fn new(clusters: usize, segments: usize, degree: usize) -> Self {
        Self {
            clusters,
            segments,
            degree,
            variance_mode: VarianceMode::Free,
            gating_mode: GatingMode::PerCluster,
        }
    }

    pub fn with_variance_mode(mut self, mode: VarianceMode) -> Self {
        self.variance_mode = mode;
        self
    }

    pub fn with_gating_mode(mut self, mode: GatingMode) -> Self {
        self.gating_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.clusters == 0 {
            return Err(DataError::InvalidStructure("cluster count must be at least 1".into()));
        }
        if self.segments == 0 {
            return Err(DataError::InvalidStructure("segment count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn coefficient_count(&self) -> usize {
        self.degree + 1
    }

    pub fn variance_count(&self) -> usize {
        self.variance_mode.variance_count(self.clusters, self.segments)
    }
}

/// Mixture of hidden-process regression models.
#[derive(Debug, Clone, PartialEq)]
pub struct HprMixtureModel {
    structure: ModelStructure,
    time_scale: TimeScale,
    proportions: Vec<f64>,
    gating: Vec<GatingParameters>,
    coefficients: Vec<Vec<Vec<f64>>>,
    variances: Vec<f64>,
}

impl HprMixtureModel {
    /// Builds a model, checking every parameter invariant.
    ///
    /// `gating` holds one entry per cluster (identical entries under shared
    /// gating), `coefficients[k][l]` the degree+1 coefficients of regime `l`
    /// of cluster `k`, and `variances` the layout given by the variance mode.
    pub fn new(
        structure: ModelStructure,
        time_scale: TimeScale,
        proportions: Vec<f64>,
        gating: Vec<GatingParameters>,
        coefficients: Vec<Vec<Vec<f64>>>,
        variances: Vec<f64>,
    ) -> Result<Self, DataError> {
        structure.validate()?;
        let k = structure.clusters;
        let l = structure.segments;
        let invalid = |msg: String| Err(DataError::InvalidModel(msg));
        if !(time_scale.scale.is_finite() && time_scale.scale > 0.0 && time_scale.offset.is_finite()) {
            return invalid(format!("bad time scale {time_scale:?}"));
        }
        validate_proportions(&proportions, k)?;
        if gating.len() != k {
            return invalid(format!("expected {k} gating sets, got {}", gating.len()));
        }
        for (c, g) in gating.iter().enumerate() {
            if g.segments() != l {
                return invalid(format!("gating of cluster {} has {} regimes, expected {l}", c + 1, g.segments()));
            }
            if !g.is_pinned() {
                return invalid(format!("gating of cluster {} does not pin the last regime to zero", c + 1));
            }
            if !g.pairs().iter().flatten().all(|a| a.is_finite()) {
                return invalid(format!("non-finite gating parameter in cluster {}", c + 1));
            }
        }
        if structure.gating_mode == GatingMode::Shared && gating.windows(2).any(|w| w[0] != w[1]) {
            return invalid("shared gating requires identical gating sets".into());
        }
        if coefficients.len() != k || coefficients.iter().any(|c| c.len() != l) {
            return invalid(format!("coefficients must be laid out as {k} x {l}"));
        }
        let d = structure.coefficient_count();
        for row in &coefficients {
            for beta in row {
                if beta.len() != d {
                    return invalid(format!("coefficient vector of length {}, expected {d}", beta.len()));
                }
                if !beta.iter().all(|b| b.is_finite()) {
                    return invalid("non-finite regression coefficient".into());
                }
            }
        }
        validate_variances(&variances, structure.variance_count())?;
        Ok(Self { structure, time_scale, proportions, gating, coefficients, variances })
    }

    pub fn structure(&self) -> &ModelStructure {
        &self.structure
    }

    pub fn time_scale(&self) -> TimeScale {
        self.time_scale
    }

    pub fn proportions(&self) -> &[f64] {
        &self.proportions
    }

    pub fn gating(&self, k: usize) -> &GatingParameters {
        &self.gating[k]
    }

    pub fn gating_sets(&self) -> &[GatingParameters] {
        &self.gating
    }

    pub fn coefficients(&self, k: usize, l: usize) -> &[f64] {
        &self.coefficients[k][l]
    }

    pub fn all_coefficients(&self) -> &[Vec<Vec<f64>>] {
        &self.coefficients
    }

    /// Variance of regime `l` of cluster `k`, resolved through the variance mode.
    #[inline]
    pub fn variance(&self, k: usize, l: usize) -> f64 {
        self.variances[self.structure.variance_mode.variance_index(k, l, self.structure.segments)]
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Number of scalars that are actually free in this parameter object:
    /// proportions minus the sum constraint, the distinct non-pinned gating
    /// pairs, every coefficient and every stored variance.
    pub fn free_scalar_count(&self) -> usize {
        let proportions = self.proportions.len() - 1;
        let distinct_gates = match self.structure.gating_mode {
            GatingMode::PerCluster => self.gating.len(),
            GatingMode::Shared => 1,
        };
        let gating: usize = self.gating[..distinct_gates].iter().map(|g| g.free_len()).sum();
        let coefficients: usize = self.coefficients.iter().flatten().map(Vec::len).sum();
        proportions + gating + coefficients + self.variances.len()
    }
}

/// Baseline mixture of polynomial regressions with isotropic noise.
#[derive(Debug, Clone, PartialEq)]
pub struct RegMixtureModel {
    degree: usize,
    time_scale: TimeScale,
    proportions: Vec<f64>,
    coefficients: Vec<Vec<f64>>,
    variances: Vec<f64>,
}

impl RegMixtureModel {
    pub fn new(
        degree: usize,
        time_scale: TimeScale,
        proportions: Vec<f64>,
        coefficients: Vec<Vec<f64>>,
        variances: Vec<f64>,
    ) -> Result<Self, DataError> {
        let k = proportions.len();
        if k == 0 {
            return Err(DataError::InvalidStructure("cluster count must be at least 1".into()));
        }
        if !(time_scale.scale.is_finite() && time_scale.scale > 0.0 && time_scale.offset.is_finite()) {
            return Err(DataError::InvalidModel(format!("bad time scale {time_scale:?}")));
        }
        validate_proportions(&proportions, k)?;
        if coefficients.len() != k
            || coefficients.iter().any(|b| b.len() != degree + 1 || !b.iter().all(|x| x.is_finite()))
        {
            return Err(DataError::InvalidModel(format!(
                "expected {k} finite coefficient vectors of length {}",
                degree + 1
            )));
        }
        validate_variances(&variances, k)?;
        Ok(Self { degree, time_scale, proportions, coefficients, variances })
    }

    pub fn clusters(&self) -> usize {
        self.proportions.len()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn time_scale(&self) -> TimeScale {
        self.time_scale
    }

    pub fn proportions(&self) -> &[f64] {
        &self.proportions
    }

    pub fn coefficients(&self, k: usize) -> &[f64] {
        &self.coefficients[k]
    }

    pub fn all_coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    pub fn variance(&self, k: usize) -> f64 {
        self.variances[k]
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn free_scalar_count(&self) -> usize {
        self.proportions.len() - 1 + self.coefficients.iter().map(Vec::len).sum::<usize>() + self.variances.len()
    }
}

fn validate_proportions(proportions: &[f64], k: usize) -> Result<(), DataError> {
    if proportions.len() != k {
        return Err(DataError::InvalidModel(format!("expected {k} proportions, got {}", proportions.len())));
    }
    if !proportions.iter().all(|&p| p.is_finite() && p > 0.0 && p <= 1.0) {
        return Err(DataError::InvalidModel("proportions must lie in (0, 1]".into()));
    }
    let sum: f64 = proportions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(DataError::InvalidModel(format!("proportions sum to {sum}")));
    }
    Ok(())
}

fn validate_variances(variances: &[f64], expected: usize) -> Result<(), DataError> {
    if variances.len() != expected {
        return Err(DataError::InvalidModel(format!("expected {expected} variances, got {}", variances.len())));
    }
    if !variances.iter().all(|&v| v.is_finite() && v > 0.0) {
        return Err(DataError::InvalidModel("variances must be positive and finite".into()));
    }
    Ok(())
}

/// Posterior responsibilities from an E-step.
///
/// `r[i][k]` is the probability that series `i` belongs to cluster `k`;
/// `lambda(i, j, k, l)` the joint probability that point `j` of series `i`
/// belongs to cluster `k` and regime `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriors {
    n: usize,
    m: usize,
    clusters: usize,
    segments: usize,
    r: Vec<f64>,
    lambda: Vec<f64>,
}

impl Posteriors {
    pub(crate) fn from_parts(
        n: usize,
        m: usize,
        clusters: usize,
        segments: usize,
        r: Vec<f64>,
        lambda: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(r.len(), n * clusters);
        debug_assert_eq!(lambda.len(), n * m * clusters * segments);
        Self { n, m, clusters, segments, r, lambda }
    }

    /// Builds posteriors from explicit arrays: `r` is `n x K`, `lambda` is
    /// indexed `[i][j][k][l]`.
    pub fn new(r: Vec<Vec<f64>>, lambda: Vec<Vec<Vec<Vec<f64>>>>) -> Result<Self, DataError> {
        let n = r.len();
        if n == 0 || lambda.len() != n {
            return Err(DataError::DimensionMismatch { expected: n, found: lambda.len() });
        }
        let clusters = r[0].len();
        let m = lambda[0].len();
        let segments = lambda[0].first().and_then(|x| x.first()).map_or(0, Vec::len);
        let mut flat_lambda = Vec::with_capacity(n * m * clusters * segments);
        for li in &lambda {
            if li.len() != m {
                return Err(DataError::DimensionMismatch { expected: m, found: li.len() });
            }
            for lij in li {
                if lij.len() != clusters {
                    return Err(DataError::DimensionMismatch { expected: clusters, found: lij.len() });
                }
                for lijk in lij {
                    if lijk.len() != segments {
                        return Err(DataError::DimensionMismatch { expected: segments, found: lijk.len() });
                    }
                    flat_lambda.extend_from_slice(lijk);
                }
            }
        }
        let mut flat_r = Vec::with_capacity(n * clusters);
        for row in &r {
            if row.len() != clusters {
                return Err(DataError::DimensionMismatch { expected: clusters, found: row.len() });
            }
            flat_r.extend_from_slice(row);
        }
        Ok(Self::from_parts(n, m, clusters, segments, flat_r, flat_lambda))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    #[inline]
    pub fn r(&self, i: usize, k: usize) -> f64 {
        self.r[i * self.clusters + k]
    }

    pub fn r_row(&self, i: usize) -> &[f64] {
        &self.r[i * self.clusters..(i + 1) * self.clusters]
    }

    /// Rows of `r` as owned vectors.
    pub fn r_matrix(&self) -> Vec<Vec<f64>> {
        self.r.chunks(self.clusters).map(<[f64]>::to_vec).collect()
    }

    #[inline]
    pub fn lambda(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.lambda[((i * self.m + j) * self.clusters + k) * self.segments + l]
    }

    /// The `K x L` block of joint posteriors for point `j` of series `i`.
    pub fn lambda_point(&self, i: usize, j: usize) -> &[f64] {
        let block = self.clusters * self.segments;
        let start = (i * self.m + j) * block;
        &self.lambda[start..start + block]
    }

    /// Cluster totals `sum_i r_ik`.
    pub fn cluster_mass(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.clusters];
        for row in self.r.chunks(self.clusters) {
            for (m, r) in mass.iter_mut().zip(row) {
                *m += r;
            }
        }
        mass
    }
}

/// Outcome of one random restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub seed: u64,
    pub final_log_likelihood: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub failure: Option<String>,
}

/// Diagnostics of an EM fit (the winning restart).
#[derive(Debug, Clone)]
pub struct EmFitReport {
    pub final_log_likelihood: f64,
    pub loglik_trace: Vec<f64>,
    /// Number of M-steps performed.
    pub iterations: usize,
    pub converged: bool,
    pub posteriors: Posteriors,
    pub restart_index: usize,
    pub restarts: Vec<RestartSummary>,
    pub warnings: Vec<String>,
}

/// Controls shared by both EM fitting routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub restarts: usize,
    pub max_iters: usize,
    /// Relative log-likelihood improvement below which EM stops.
    pub tol: f64,
    pub seed: u64,
    pub normalize_time: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { restarts: 20, max_iters: 500, tol: 1e-8, seed: 0, normalize_time: true }
    }
}
