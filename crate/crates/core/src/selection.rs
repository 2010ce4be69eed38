//! BIC and exhaustive grid search over the number of clusters, regimes and
//! the polynomial degree.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::FitError;
use crate::hpr::hpr_fit_em;
use crate::reg_mixture::regmix_fit_em;
use crate::types::{FitOptions, GatingMode, ModelStructure, TimeSeriesDataset, VarianceMode};

/// Number of free scalars: proportions `K-1`, gates `2(L-1)` per distinct
/// gate, `L K (p+1)` coefficients and the variances of the variance mode.
pub fn free_parameter_count(s: &ModelStructure) -> usize {
    let (k, l, p) = (s.clusters, s.segments, s.degree);
    let gates = match s.gating_mode {
        GatingMode::PerCluster => 2 * k * (l - 1),
        GatingMode::Shared => 2 * (l - 1),
    };
    (k - 1) + gates + l * k * (p + 1) + s.variance_count()
}

/// Free scalars of the baseline regression mixture; equal to the
/// single-regime count.
pub fn regmix_free_parameter_count(clusters: usize, degree: usize) -> usize {
    free_parameter_count(&ModelStructure::new(clusters, 1, degree))
}

/// Sample size entering the BIC penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PenaltySize {
    /// Number of series `n`.
    #[default]
    Series,
    /// Number of observations `n * m`.
    Observations,
}

/// `loglik - nu / 2 * ln(n)`; larger is better.
pub fn bic(loglik: f64, nu: usize, n: usize) -> f64 {
    loglik - nu as f64 / 2.0 * (n as f64).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Hpr,
    Regmix,
}

/// Inclusive candidate ranges and fitting controls for a selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionGrid {
    pub kind: ModelKind,
    pub clusters: (usize, usize),
    /// Ignored for the baseline, which always has a single regime.
    pub segments: (usize, usize),
    pub degrees: (usize, usize),
    pub variance_mode: VarianceMode,
    pub gating_mode: GatingMode,
    pub options: FitOptions,
    pub penalty: PenaltySize,
}

impl SelectionGrid {
    pub fn hpr(clusters: (usize, usize), segments: (usize, usize), degrees: (usize, usize), options: FitOptions) -> Self {
        Self {
            kind: ModelKind::Hpr,
            clusters,
            segments,
            degrees,
            variance_mode: VarianceMode::Free,
            gating_mode: GatingMode::PerCluster,
            options,
            penalty: PenaltySize::Series,
        }
    }

    pub fn regmix(clusters: (usize, usize), degrees: (usize, usize), options: FitOptions) -> Self {
        Self { kind: ModelKind::Regmix, segments: (1, 1), ..Self::hpr(clusters, (1, 1), degrees, options) }
    }

    fn validate(&self) -> Result<(), FitError> {
        let bad = |r: (usize, usize), min: usize| r.0 > r.1 || r.0 < min;
        if bad(self.clusters, 1) || bad(self.segments, 1) || bad(self.degrees, 0) {
            return Err(crate::DataError::InvalidStructure(format!("empty or invalid selection ranges in {self:?}")).into());
        }
        Ok(())
    }

    pub fn structures(&self) -> Vec<ModelStructure> {
        let segments = match self.kind {
            ModelKind::Hpr => self.segments,
            ModelKind::Regmix => (1, 1),
        };
        let mut out = Vec::new();
        for k in self.clusters.0..=self.clusters.1 {
            for l in segments.0..=segments.1 {
                for p in self.degrees.0..=self.degrees.1 {
                    let mut s = ModelStructure::new(k, l, p);
                    if self.kind == ModelKind::Hpr {
                        s = s.with_variance_mode(self.variance_mode).with_gating_mode(self.gating_mode);
                    }
                    out.push(s);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionCell {
    pub structure: ModelStructure,
    pub log_likelihood: Option<f64>,
    pub free_parameters: usize,
    pub bic: Option<f64>,
    pub converged: bool,
    /// Why the cell has no fit (infeasible structure or failed restarts).
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub kind: ModelKind,
    pub cells: Vec<SelectionCell>,
    /// Index into `cells` of the highest-BIC cell.
    pub winner: usize,
    pub warnings: Vec<String>,
}

impl SelectionReport {
    pub fn winning_cell(&self) -> &SelectionCell {
        &self.cells[self.winner]
    }

    /// Comma-separated table, one row per cell (1-based structural values).
    pub fn write_table<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "model,K,L,p,variance_mode,gating_mode,loglik,nu,bic,converged,status")?;
        for c in &self.cells {
            let s = &c.structure;
            let fmt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                match self.kind {
                    ModelKind::Hpr => "hpr",
                    ModelKind::Regmix => "regmix",
                },
                s.clusters,
                s.segments,
                s.degree,
                variance_mode_token(s.variance_mode),
                gating_mode_token(s.gating_mode),
                fmt(c.log_likelihood),
                c.free_parameters,
                fmt(c.bic),
                c.converged,
                c.skipped.as_deref().unwrap_or("ok").replace(',', ";"),
            )?;
        }
        Ok(())
    }
}

pub fn variance_mode_token(mode: VarianceMode) -> &'static str {
    match mode {
        VarianceMode::Free => "free",
        VarianceMode::CommonPerCluster => "cluster",
        VarianceMode::CommonGlobal => "global",
    }
}

pub fn gating_mode_token(mode: GatingMode) -> &'static str {
    match mode {
        GatingMode::PerCluster => "per-cluster",
        GatingMode::Shared => "shared",
    }
}

fn fit_cell(data: &TimeSeriesDataset, grid: &SelectionGrid, s: &ModelStructure) -> SelectionCell {
    let nu = free_parameter_count(s);
    let penalty_n = match grid.penalty {
        PenaltySize::Series => data.n(),
        PenaltySize::Observations => data.n() * data.m(),
    };
    let outcome = match grid.kind {
        ModelKind::Hpr => hpr_fit_em(data, s, &grid.options).map(|(_, r)| (r.final_log_likelihood, r.converged)),
        ModelKind::Regmix => {
            regmix_fit_em(data, s.clusters, s.degree, &grid.options).map(|(_, r)| (r.final_log_likelihood, r.converged))
        }
    };
    match outcome {
        Ok((ll, converged)) => SelectionCell {
            structure: *s,
            log_likelihood: Some(ll),
            free_parameters: nu,
            bic: Some(bic(ll, nu, penalty_n)),
            converged,
            skipped: None,
        },
        Err(e) => SelectionCell { structure: *s, log_likelihood: None, free_parameters: nu, bic: None, converged: false, skipped: Some(e.to_string()) },
    }
}

/// Fits every cell of the grid (best of restarts each) and picks the
/// highest-BIC converged cell. Cells that cannot be fit are kept in the
/// table with the reason. When no cell converged, the best available cell
/// wins and a warning is recorded.
pub fn select(data: &TimeSeriesDataset, grid: &SelectionGrid) -> Result<SelectionReport, FitError> {
    grid.validate()?;
    let cells: Vec<SelectionCell> = grid.structures().par_iter().map(|s| fit_cell(data, grid, s)).collect();
    let pick = |require_converged: bool| {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in cells.iter().enumerate() {
            if let Some(b) = c.bic {
                if (!require_converged || c.converged) && best.is_none_or(|(_, v)| b > v) {
                    best = Some((i, b));
                }
            }
        }
        best.map(|(i, _)| i)
    };
    let mut warnings = Vec::new();
    let winner = match pick(true) {
        Some(i) => i,
        None => {
            let i = pick(false).ok_or(FitError::NoFeasibleCell)?;
            warnings.push("no cell converged; winner chosen among non-converged fits".to_string());
            i
        }
    };
    Ok(SelectionReport { kind: grid.kind, cells, winner, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_for_reference_structures() {
        // (K-1) + 2K(L-1) + LK(p+1) + LK = 1 + 8 + 24 + 6
        assert_eq!(free_parameter_count(&ModelStructure::new(2, 3, 3)), 39);
        assert_eq!(free_parameter_count(&ModelStructure::new(1, 1, 0)), 2);
        let global = ModelStructure::new(2, 3, 3).with_variance_mode(VarianceMode::CommonGlobal);
        assert_eq!(free_parameter_count(&global), 1 + 8 + 24 + 1);
        let shared = ModelStructure::new(2, 3, 3).with_gating_mode(GatingMode::Shared);
        assert_eq!(free_parameter_count(&shared), 1 + 4 + 24 + 6);
        assert_eq!(regmix_free_parameter_count(2, 10), 1 + 22 + 2);
    }

    #[test]
    fn bic_arithmetic() {
        assert_eq!(bic(-12.5, 0, 50), -12.5);
        assert_eq!(bic(-12.5, 43, 1), -12.5);
        let expected = -100.0 - 21.5 * 50f64.ln();
        assert!((bic(-100.0, 43, 50) - expected).abs() < 1e-9);
        assert!((expected + 184.11).abs() < 0.01);
    }

    #[test]
    fn grid_enumeration_order() {
        let g = SelectionGrid::hpr((1, 2), (1, 2), (0, 1), FitOptions::default());
        let s = g.structures();
        assert_eq!(s.len(), 8);
        assert_eq!((s[0].clusters, s[0].segments, s[0].degree), (1, 1, 0));
        assert_eq!((s[7].clusters, s[7].segments, s[7].degree), (2, 2, 1));
        assert_eq!(SelectionGrid::regmix((1, 3), (0, 2), FitOptions::default()).structures().len(), 9);
    }
}
