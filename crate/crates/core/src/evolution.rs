//! Time integration with `Δt = dx`.
//!
//! Each step transports every cell one index along the characteristics,
//! removes the fired fraction and reinjects it at age zero. The activity is
//! solved implicitly at every step (no delay) or from the discharge history.

use crate::activity::{ActivityError, ActivityMethod, ActivityOptions, ActivityProblem};
use crate::delay_kernel::{DelayError, DelayKernel, DischargeHistory};
use crate::firing_rate::{FiringRateModel, FrozenRate};
use crate::grid::{AgeGrid, DensityState};
use crate::kinetics::DischargeFunctional;
use crate::steady_state::SteadyState;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("activity solver is ambiguous at t={time}: roots {roots:?}")]
    Ambiguous { time: f64, roots: Vec<f64> },
    #[error("activity solver failed at t={time}: {source}")]
    Activity { time: f64, source: ActivityError },
    #[error("invariant violated at t={time}: {what}")]
    Invariant { time: f64, what: String },
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error("refusing to run: kappa0 = 0 at lambda={lambda} >= lambda_weak={lambda_weak}; set allow_degenerate to override")]
    DegenerateStrongRegime { lambda: f64, lambda_weak: f64 },
}

impl EvolutionError {
    pub fn is_invariant_violation(&self) -> bool {
        matches!(self, Self::Invariant { .. })
    }

    pub fn is_ambiguity(&self) -> bool {
        matches!(self, Self::Ambiguous { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub grid: AgeGrid,
    pub model: FiringRateModel,
    pub kernel: DelayKernel,
    pub t_end: f64,
    pub record_every: usize,
    pub fixed_point_tol: f64,
    pub fixed_point_max_iter: usize,
    /// Exponent of the `L¹_q` moment reported in the trace.
    pub q: f64,
    /// Run even when `κ₀ = 0` outside the weak regime.
    pub allow_degenerate: bool,
}

impl SimulationConfig {
    pub fn new(grid: AgeGrid, model: FiringRateModel, t_end: f64) -> Self {
        Self {
            grid,
            model,
            kernel: DelayKernel::dirac(),
            t_end,
            record_every: 10,
            fixed_point_tol: 1e-12,
            fixed_point_max_iter: 200,
            q: 1.0,
            allow_degenerate: false,
        }
    }

    pub fn with_kernel(mut self, kernel: DelayKernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn dt(&self) -> f64 {
        self.grid.dx()
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt()).round() as usize
    }

    pub fn validate(&self) -> Result<(), EvolutionError> {
        let mut problems = Vec::new();
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            problems.push(format!("t_end must be positive, got {}", self.t_end));
        }
        if self.record_every == 0 {
            problems.push("record_every must be at least 1".to_string());
        }
        if !(self.fixed_point_tol > 0.0) {
            problems.push(format!(
                "fixed_point_tol must be positive, got {}",
                self.fixed_point_tol
            ));
        }
        if self.fixed_point_max_iter == 0 {
            problems.push("fixed_point_max_iter must be at least 1".to_string());
        }
        if !self.kernel.is_dirac() && (self.kernel.dt() - self.dt()).abs() > 1e-9 * self.dt() {
            problems.push(format!(
                "delay kernel time step {} differs from dx {}",
                self.kernel.dt(),
                self.dt()
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(EvolutionError::InvalidConfig(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationTrace {
    pub times: Vec<f64>,
    pub m_series: Vec<f64>,
    /// `P[f, m]`, including the flux leaving the horizon.
    pub p_series: Vec<f64>,
    /// Part of `p` carried by mass leaving the horizon rather than firing.
    pub exit_series: Vec<f64>,
    pub mass_series: Vec<f64>,
    /// Present when a steady state was supplied.
    pub l1_dist_to_f: Option<Vec<f64>>,
    pub linf_norm: Vec<f64>,
    pub l1q_norm: Vec<f64>,
    pub kappa0: f64,
    pub initial_sup: f64,
    /// Activity solves that needed the bisection fallback.
    pub bisection_fallbacks: usize,
    pub final_state: DensityState,
}

/// `∫k(x, 0) f(x) dx` against the piecewise-constant density.
pub fn kappa0(model: &FiringRateModel, grid: &AgeGrid, values: &[f64]) -> f64 {
    let frozen = model.freeze(0.0);
    values
        .iter()
        .enumerate()
        .map(|(i, f)| f * (frozen.cumulative(grid.edge(i + 1)) - frozen.cumulative(grid.edge(i))))
        .sum()
}

/// Advances `values` by one step at frozen profile `frozen`, in place.
/// Returns the reinjected boundary value (absorbed mass over `dx`).
fn advance(values: &mut [f64], frozen: &FrozenRate, grid: &AgeGrid) -> f64 {
    let n = values.len();
    let mut absorbed = values[n - 1];
    let mut upper = frozen.cell(grid, n - 1);
    for i in (0..n - 1).rev() {
        let here = frozen.cell(grid, i);
        let s = ((-here.dk).exp() * upper.j / here.j).min(1.0);
        let f = values[i];
        values[i + 1] = s * f;
        absorbed += (1.0 - s) * f;
        upper = here;
    }
    values[0] = absorbed;
    absorbed
}

/// One time step at activity `m`.
///
/// The returned state is at `t + dx`; its `discharge` field holds the
/// reinjected boundary value `f(t + dx, 0)` and its `activity` the `m` used.
pub fn step(
    state: &DensityState,
    m: f64,
    model: &FiringRateModel,
    grid: &AgeGrid,
) -> Result<(DensityState, f64), EvolutionError> {
    if state.values.len() != grid.n_cells() {
        return Err(EvolutionError::InvalidConfig(format!(
            "state has {} cells, grid has {}",
            state.values.len(),
            grid.n_cells()
        )));
    }
    let mut values = state.values.clone();
    let boundary = advance(&mut values, &model.freeze(m), grid);
    let time = state.time + grid.dx();
    if let Some(i) = values.iter().position(|v| !(*v >= 0.0)) {
        return Err(EvolutionError::Invariant {
            time,
            what: format!("cell {i} has value {} after the step", values[i]),
        });
    }
    let mass = values.iter().sum::<f64>() * grid.dx();
    Ok((
        DensityState {
            values,
            mass,
            activity: m,
            discharge: boundary,
            time,
        },
        boundary,
    ))
}

/// Exit part of the last cell's discharge at profile `frozen`.
fn exit_flux(values: &[f64], frozen: &FrozenRate, grid: &AgeGrid) -> f64 {
    let n = values.len();
    let p = frozen.cell(grid, n - 1);
    (-p.dk).exp() / p.j * values[n - 1] * grid.dx()
}

struct Bounds {
    sup: f64,
    k1: f64,
    x0: f64,
    /// Lower bound for `t ≥ x₀`, `None` when `κ₀ = 0`.
    late: Option<f64>,
    /// Lower bound for `t < x₀`.
    early: f64,
    slack: f64,
}

impl Bounds {
    fn new(model: &FiringRateModel, grid: &AgeGrid, kappa0: f64, initial_sup: f64, delayed: bool) -> Self {
        let k1 = model.k1();
        let x0 = model.half_rate_age();
        let decay = (-k1 * x0).exp();
        let late = 0.5 * model.k0() * decay;
        let early = decay * kappa0;
        let (late, early) = if delayed {
            let lo = late.min(early);
            (lo, lo)
        } else {
            (late, early)
        };
        Self {
            sup: initial_sup,
            k1,
            x0,
            late: (kappa0 > 0.0).then_some(late),
            early,
            slack: 10.0 * grid.dx(),
        }
    }

    fn check(&self, time: f64, m: f64, firing: f64, linf: f64) -> Result<(), String> {
        if firing > self.k1 * (1.0 + 1e-12) + 1e-14 {
            return Err(format!("discharge {firing} exceeds k1={}", self.k1));
        }
        if linf > self.sup + self.k1 + self.slack {
            return Err(format!(
                "sup norm {linf} exceeds ||f0||_inf + k1 + 10dx = {}",
                self.sup + self.k1 + self.slack
            ));
        }
        if let Some(late) = self.late {
            let bound = if time >= self.x0 { late } else { self.early };
            if m < bound - self.slack {
                return Err(format!("activity {m} below lower bound {bound} - 10dx"));
            }
        }
        Ok(())
    }
}

/// Integrates from `f0` to `config.t_end`.
pub fn run(
    config: &SimulationConfig,
    f0: &DensityState,
    steady: Option<&SteadyState>,
) -> Result<SimulationTrace, EvolutionError> {
    config.validate()?;
    let grid = config.grid;
    let model = config.model;
    let dx = grid.dx();
    if f0.values.len() != grid.n_cells() {
        return Err(EvolutionError::InvalidConfig(format!(
            "initial datum has {} cells, grid has {}",
            f0.values.len(),
            grid.n_cells()
        )));
    }
    if let Some(ss) = steady {
        if ss.values.len() != grid.n_cells() {
            return Err(EvolutionError::InvalidConfig(
                "steady state lives on a different grid".into(),
            ));
        }
    }
    let k0_value = kappa0(&model, &grid, &f0.values);
    let delayed = !config.kernel.is_dirac();
    if !delayed && k0_value <= 0.0 && !config.allow_degenerate && model.lambda() > 0.0 {
        let est = model
            .estimate_xi((0.0, model.k1()), 32, grid.x_max(), f0.sup())
            .map_err(|e| EvolutionError::InvalidConfig(e.to_string()))?;
        if model.lambda() >= est.lambda_weak {
            return Err(EvolutionError::DegenerateStrongRegime {
                lambda: model.lambda(),
                lambda_weak: est.lambda_weak,
            });
        }
    }

    let opts = ActivityOptions {
        tol: config.fixed_point_tol,
        max_iter: config.fixed_point_max_iter,
        ..ActivityOptions::default()
    };
    let bracket = (0.0, model.k1());
    let initial_sup = f0.sup();
    let bounds = Bounds::new(&model, &grid, k0_value, initial_sup, delayed);
    let mass0 = grid.integrate(&f0.values).unwrap_or(f0.mass);
    let n_steps = config.steps();

    let mut trace = SimulationTrace {
        kappa0: k0_value,
        initial_sup,
        l1_dist_to_f: steady.map(|_| Vec::new()),
        ..SimulationTrace::default()
    };
    let mut values = f0.values.clone();
    let mut warm: Option<f64> = None;

    // Pre-history: the no-delay activity of f0 and its discharge.
    let mut history = if delayed {
        let d = DischargeFunctional::new(&model, &grid, &values);
        let sol = ActivityProblem::new(&d, bracket)
            .solve(None, &opts, true)
            .map_err(|e| wrap_activity(0.0, e))?;
        warm = Some(sol.mu);
        let p0 = d.eval(sol.mu);
        Some(DischargeHistory::filled(config.kernel.memory_len() - 1, p0))
    } else {
        None
    };

    for s in 0..=n_steps {
        let time = s as f64 * dx;
        let record = s % config.record_every == 0 || s == n_steps;
        let discharge = DischargeFunctional::new(&model, &grid, &values);
        let problem = match &history {
            None => ActivityProblem::new(&discharge, bracket),
            Some(h) => ActivityProblem::with_delay(
                &discharge,
                config.kernel.weights()[0],
                config.kernel.lagged_part(h)?,
                bracket,
            ),
        };
        let sol = problem
            .solve(warm, &opts, s == 0 || record)
            .map_err(|e| wrap_activity(time, e))?;
        if sol.method == ActivityMethod::Bisection {
            trace.bisection_fallbacks += 1;
        }
        let m = sol.mu;
        warm = Some(m);
        let p = discharge.eval(m);
        let frozen = model.freeze(m);

        let mass = values.iter().sum::<f64>() * dx;
        if !mass.is_finite() || !m.is_finite() {
            log::error!(
                "non-finite state at t={time}: m={m}, mass={mass}, first cells {:?}",
                &values[..values.len().min(8)]
            );
            return Err(EvolutionError::Invariant {
                time,
                what: format!("non-finite state (m={m}, mass={mass})"),
            });
        }
        if (mass - mass0).abs() > 1e-12 + 1e-12 * s as f64 {
            return Err(EvolutionError::Invariant {
                time,
                what: format!("mass drifted to {mass} from {mass0}"),
            });
        }
        let exit = exit_flux(&values, &frozen, &grid);
        let linf = values.iter().fold(0.0f64, |a, &b| a.max(b));
        bounds
            .check(time, m.min(p), p - exit, linf)
            .map_err(|what| EvolutionError::Invariant { time, what })?;

        if record {
            trace.times.push(time);
            trace.m_series.push(m);
            trace.p_series.push(p);
            trace.exit_series.push(exit);
            trace.mass_series.push(mass);
            trace.linf_norm.push(linf);
            trace.l1q_norm.push(grid.l1q_norm(&values, config.q).unwrap_or(f64::NAN));
            if let (Some(ss), Some(series)) = (steady, trace.l1_dist_to_f.as_mut()) {
                series.push(grid.l1_distance(&values, &ss.values).unwrap_or(f64::NAN));
            }
        }
        if s == n_steps {
            trace.final_state = DensityState {
                values,
                mass,
                activity: m,
                discharge: p,
                time,
            };
            break;
        }
        if let Some(h) = history.as_mut() {
            h.push(p);
        }
        advance(&mut values, &frozen, &grid);
        if let Some(i) = values.iter().position(|v| !(*v >= 0.0)) {
            return Err(EvolutionError::Invariant {
                time: time + dx,
                what: format!("cell {i} has value {}", values[i]),
            });
        }
    }
    Ok(trace)
}

fn wrap_activity(time: f64, e: ActivityError) -> EvolutionError {
    match e {
        ActivityError::Ambiguous { roots } => EvolutionError::Ambiguous { time, roots },
        other => EvolutionError::Activity {
            time,
            source: other,
        },
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least 3 positive samples in the window [{0}, {1}], got {2}")]
    TooFewPoints(f64, f64, usize),
    #[error("series lengths differ: {0} times, {1} values")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub alpha: f64,
    pub c: f64,
    pub r2: f64,
    /// Window actually used.
    pub window: (f64, f64),
    /// The window was cut short because the series reached the rounding floor.
    pub shrunk: bool,
}

/// Distances below this are rounding noise and are not fitted.
pub const DISTANCE_FLOOR: f64 = 1e-13;

/// Least-squares line through `(t, ln d)` for `t` in `window`.
pub fn decay_fit(times: &[f64], dist: &[f64], window: (f64, f64)) -> Result<DecayFit, FitError> {
    if times.len() != dist.len() {
        return Err(FitError::LengthMismatch(times.len(), dist.len()));
    }
    let mut end = window.1;
    let mut shrunk = false;
    if let Some((t, _)) = times
        .iter()
        .zip(dist)
        .find(|(t, d)| **t >= window.0 && **t <= window.1 && !(**d >= DISTANCE_FLOOR))
    {
        end = *t;
        shrunk = true;
        log::warn!(
            "distance reaches the floor {DISTANCE_FLOOR:e} at t={t}; fit window shrunk to [{}, {t})",
            window.0
        );
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(dist)
        .filter(|(t, _)| **t >= window.0 && if shrunk { **t < end } else { **t <= end })
        .map(|(t, d)| (*t, d.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(FitError::TooFewPoints(window.0, end, pts.len()));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let alpha = sty / stt;
    let intercept = my - alpha * mt;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - alpha * p.0).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(DecayFit {
        alpha,
        c: intercept.exp(),
        r2,
        window: (window.0, end),
        shrunk,
    })
}

/// [`decay_fit`] over the trace's distance series.
pub fn decay_fit_trace(trace: &SimulationTrace, window: (f64, f64)) -> Result<DecayFit, FitError> {
    let dist = trace.l1_dist_to_f.as_deref().unwrap_or(&[]);
    decay_fit(&trace.times, dist, window)
}
