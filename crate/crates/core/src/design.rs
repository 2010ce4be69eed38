//! Polynomial design (Vandermonde) matrices and weighted least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::DataError;
use crate::types::{TimeGrid, TimeScale};

/// `m x (p+1)` matrix with rows `(1, t_j, t_j^2, ..., t_j^p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    matrix: DMatrix<f64>,
}

impl DesignMatrix {
    /// Builds the design over explicit (already transformed) time values.
    pub fn from_times(times: &[f64], degree: usize) -> Result<Self, DataError> {
        if degree + 1 > times.len() {
            return Err(DataError::DegreeTooLargeForGrid { degree, points: times.len() });
        }
        let matrix = DMatrix::from_fn(times.len(), degree + 1, |j, u| times[j].powi(u as i32));
        Ok(Self { matrix })
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn degree(&self) -> usize {
        self.matrix.ncols() - 1
    }

    pub fn get(&self, j: usize, u: usize) -> f64 {
        self.matrix[(j, u)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `T * beta`.
    pub fn predict(&self, beta: &[f64]) -> Result<Vec<f64>, DataError> {
        if beta.len() != self.cols() {
            return Err(DataError::DimensionMismatch { expected: self.cols(), found: beta.len() });
        }
        Ok((0..self.rows())
            .map(|j| (0..self.cols()).map(|u| self.matrix[(j, u)] * beta[u]).sum())
            .collect())
    }

    /// Minimizes `sum_j w_j (y_j - T_j beta)^2`.
    pub fn weighted_least_squares(&self, weights: &[f64], targets: &[f64]) -> Result<WlsSolution, DataError> {
        weighted_least_squares(self, weights, targets)
    }
}

/// Design over `grid` after mapping it through `scale`.
pub fn build_design(grid: &TimeGrid, degree: usize, scale: TimeScale) -> Result<DesignMatrix, DataError> {
    DesignMatrix::from_times(&scale.transform(grid), degree)
}

/// Evaluates `T * beta`.
pub fn predict_polynomial(design: &DesignMatrix, beta: &[f64]) -> Result<Vec<f64>, DataError> {
    design.predict(beta)
}

/// Horner evaluation of `beta` at a single time value.
#[inline]
pub fn eval_polynomial(beta: &[f64], t: f64) -> f64 {
    beta.iter().rev().fold(0.0, |acc, &b| acc * t + b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WlsSolution {
    pub coefficients: Vec<f64>,
    /// Set when the weighted design was rank deficient and a ridge jitter was
    /// added to the normal equations.
    pub regularized: bool,
}

/// Weighted least squares via Householder QR of the row-scaled design.
/// Falls back to ridge-jittered normal equations when the scaled design is
/// numerically rank deficient.
pub fn weighted_least_squares(
    design: &DesignMatrix,
    weights: &[f64],
    targets: &[f64],
) -> Result<WlsSolution, DataError> {
    let m = design.rows();
    let d = design.cols();
    if weights.len() != m {
        return Err(DataError::DimensionMismatch { expected: m, found: weights.len() });
    }
    if targets.len() != m {
        return Err(DataError::DimensionMismatch { expected: m, found: targets.len() });
    }
    let active: Vec<usize> = (0..m).filter(|&j| weights[j] > 0.0).collect();
    if active.len() >= d {
        let a = DMatrix::from_fn(active.len(), d, |r, u| {
            let j = active[r];
            weights[j].sqrt() * design.matrix[(j, u)]
        });
        let b = DVector::from_fn(active.len(), |r, _| {
            let j = active[r];
            weights[j].sqrt() * targets[j]
        });
        let qr = a.qr();
        let r = qr.r();
        let diag_max = (0..d).map(|u| r[(u, u)].abs()).fold(0.0, f64::max);
        let diag_min = (0..d).map(|u| r[(u, u)].abs()).fold(f64::INFINITY, f64::min);
        if diag_max > 0.0 && diag_min > 1e-12 * diag_max {
            let qtb = qr.q().transpose() * b;
            if let Some(beta) = r.solve_upper_triangular(&qtb) {
                if beta.iter().all(|x| x.is_finite()) {
                    return Ok(WlsSolution { coefficients: beta.as_slice().to_vec(), regularized: false });
                }
            }
        }
    }
    Ok(WlsSolution { coefficients: ridge_normal_equations(design, weights, targets), regularized: true })
}

fn ridge_normal_equations(design: &DesignMatrix, weights: &[f64], targets: &[f64]) -> Vec<f64> {
    let d = design.cols();
    let t = &design.matrix;
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for j in 0..design.rows() {
        let w = weights[j];
        if w <= 0.0 {
            continue;
        }
        for u in 0..d {
            rhs[u] += w * t[(j, u)] * targets[j];
            for v in 0..d {
                gram[(u, v)] += w * t[(j, u)] * t[(j, v)];
            }
        }
    }
    let trace = gram.trace();
    let jitter = if trace > 0.0 { 1e-10 * trace } else { 1e-10 };
    for u in 0..d {
        gram[(u, u)] += jitter;
    }
    match gram.clone().cholesky() {
        Some(chol) => chol.solve(&rhs).as_slice().to_vec(),
        None => gram
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .map(|x| x.as_slice().to_vec())
            .unwrap_or_else(|_| vec![0.0; d]),
    }
}
