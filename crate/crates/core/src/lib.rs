//! Model-based clustering and segmentation of univariate time series whose
//! members share changes in regime.
//!
//! Each cluster is a regression model with `L` polynomial regimes whose
//! mixing proportions vary smoothly in time through a logistic (softmax)
//! gate. Parameters are fit by EM, with an IRLS solver for the gates and
//! weighted least squares for the polynomial coefficients. A plain
//! polynomial regression mixture is included as the comparison baseline,
//! along with BIC model selection, a simulation generator and the two
//! evaluation criteria (misclassification rate and intra-cluster inertia).
//!
//! Cluster and regime indices are 0-based in this crate; file formats in the
//! command-line front end are 1-based.

pub mod design;
pub mod error;
pub mod gating;
pub mod hpr;
pub mod metrics;
pub mod reg_mixture;
pub mod selection;
pub mod stats;
pub mod synthetic;
pub mod types;

pub use error::{DataError, FitError};
pub use types::{
    EmFitReport, FitOptions, GatingMode, HprMixtureModel, ModelStructure, RegMixtureModel,
    RestartSummary, TimeGrid, TimeScale, TimeSeriesDataset, VarianceMode,
};
