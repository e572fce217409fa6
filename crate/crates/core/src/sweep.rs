//! Independent per-coupling summaries: steady state, `ξ`, spectral gap and
//! fitted relaxation rate.

use crate::evolution::{decay_fit_trace, run, EvolutionError, SimulationConfig};
use crate::exec::Execution;
use crate::firing_rate::FiringRateModel;
use crate::grid::{AgeGrid, DensityState};
use crate::linear_analysis::{build_generator, spectrum};
use crate::steady_state::{solve_m_with, SteadyOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub grid: AgeGrid,
    /// Coarser grid for the dense eigensolve.
    pub spectrum_grid: AgeGrid,
    pub t_end: f64,
    pub record_every: usize,
    pub fit_window: (f64, f64),
    pub xi_samples: usize,
    pub fixed_point_tol: f64,
    pub fixed_point_max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok,
    Ambiguous,
    Failed(String),
}

impl RowStatus {
    pub fn label(&self) -> &str {
        match self {
            Self::Ok => "ok",
            Self::Ambiguous => "ambiguous",
            Self::Failed(_) => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub status: RowStatus,
    pub m: Option<f64>,
    pub xi: Option<f64>,
    pub gap: Option<f64>,
    pub alpha: Option<f64>,
    pub r2: Option<f64>,
    pub unique: Option<bool>,
}

impl SweepRow {
    fn empty(lambda: f64, status: RowStatus) -> Self {
        Self {
            lambda,
            status,
            m: None,
            xi: None,
            gap: None,
            alpha: None,
            r2: None,
            unique: None,
        }
    }
}

/// One row per entry of `lambdas`, in order. Failures are recorded in the
/// row's status and never abort the sweep.
pub fn sweep(
    family: &FiringRateModel,
    lambdas: &[f64],
    f0: &DensityState,
    settings: &SweepSettings,
    exec: Execution,
) -> Vec<SweepRow> {
    exec.map(lambdas, |&lambda| sweep_row(family, lambda, f0, settings))
}

fn sweep_row(family: &FiringRateModel, lambda: f64, f0: &DensityState, s: &SweepSettings) -> SweepRow {
    let model = match family.with_lambda(lambda) {
        Ok(m) => m,
        Err(e) => return SweepRow::empty(lambda, RowStatus::Failed(e.to_string())),
    };
    let opts = SteadyOptions::for_grid(&model, &s.grid);
    let steady = match solve_m_with(&model, &s.grid, &opts) {
        Ok(ss) => ss,
        Err(e) => return SweepRow::empty(lambda, RowStatus::Failed(e.to_string())),
    };
    let mut config = SimulationConfig::new(s.grid, model, s.t_end);
    config.record_every = s.record_every;
    config.fixed_point_tol = s.fixed_point_tol;
    config.fixed_point_max_iter = s.fixed_point_max_iter;
    let trace = match run(&config, f0, Some(&steady)) {
        Ok(t) => t,
        Err(EvolutionError::Ambiguous { .. }) => return SweepRow::empty(lambda, RowStatus::Ambiguous),
        Err(e) => return SweepRow::empty(lambda, RowStatus::Failed(e.to_string())),
    };
    let mut row = SweepRow::empty(lambda, RowStatus::Ok);
    row.m = Some(steady.m);
    row.unique = Some(steady.is_unique());
    row.xi = model
        .estimate_xi((0.0, model.k1()), s.xi_samples, s.grid.x_max(), f0.sup())
        .ok()
        .map(|e| e.xi);
    match decay_fit_trace(&trace, s.fit_window) {
        Ok(fit) => {
            row.alpha = Some(fit.alpha);
            row.r2 = Some(fit.r2);
        }
        Err(e) => log::warn!("lambda={lambda}: decay fit failed: {e}"),
    }
    let gap = solve_m_with(&model, &s.spectrum_grid, &opts)
        .map_err(|e| e.to_string())
        .and_then(|ss| build_generator(&model, &s.spectrum_grid, &ss).map_err(|e| e.to_string()))
        .and_then(|mat| spectrum(&mat, 0).map_err(|e| e.to_string()));
    match gap {
        Ok(report) => row.gap = Some(report.gap),
        Err(e) => row.status = RowStatus::Failed(e),
    }
    row
}
