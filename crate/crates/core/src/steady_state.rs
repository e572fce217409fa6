//! Stationary pairs `(F, M)` with `F = M·e^{−K(x, λM)}` and `⟨F⟩ = 1`.
//!
//! Normalization reduces the problem to the scalar equation
//! `g(M) = M·Q(M) − 1 = 0`, `Q(M) = ∫ e^{−K(x, λM)} dx`, solved by bisection.

use crate::exec::Execution;
use crate::firing_rate::FiringRateModel;
use crate::grid::AgeGrid;
use crate::kinetics::Kinetics;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SteadyStateError {
    #[error("g(M) has no sign change on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("bracket must satisfy 0 < lo < hi, got ({0}, {1})")]
    InvalidBracket(f64, f64),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
}

/// How the normalization integral treats ages past the grid horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Horizon {
    /// `∫_0^{x_max}`. The discrete profile is then an exact fixed point of the
    /// time stepper, which is what relaxation runs should be measured against.
    #[default]
    Truncated,
    /// `∫_0^∞`, with the mass beyond `x_max` lumped into the last cell.
    HalfLine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyOptions {
    pub bracket: (f64, f64),
    pub tol: f64,
    pub horizon: Horizon,
    /// Points of the uniform pre-scan used to detect several roots.
    pub scan_points: usize,
}

impl SteadyOptions {
    /// Bracket `(1e-6, k1)`, widened by `1e-3·k1` so the truncated constant-rate
    /// root `k1/(1 − e^{−k1·x_max})` stays inside.
    pub fn for_model(model: &FiringRateModel) -> Self {
        Self {
            bracket: (1e-6, model.k1() * (1.0 + 1e-3)),
            tol: 1e-12,
            horizon: Horizon::Truncated,
            scan_points: 200,
        }
    }

    /// As [`SteadyOptions::for_model`], with the upper end raised to the
    /// bound `k1/(1 − e^{−k1·x_max})` that holds on short domains.
    pub fn for_grid(model: &FiringRateModel, grid: &AgeGrid) -> Self {
        let k1 = model.k1();
        let short = k1 / -(-k1 * grid.x_max()).exp_m1() * (1.0 + 1e-6);
        let mut opts = Self::for_model(model);
        opts.bracket.1 = opts.bracket.1.max(short);
        opts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub m: f64,
    /// Cell averages of `F`.
    pub values: Vec<f64>,
    pub grid: AgeGrid,
    pub lambda: f64,
    pub horizon: Horizon,
    /// `|g(M)|`.
    pub normalization_residual: f64,
    /// `max |F_{i+1} − s_i F_i| / dx` over interior cells.
    pub residual_ode: f64,
    /// `|P[F, M] − M|`.
    pub residual_activity: f64,
    /// Every root found by the pre-scan, ascending; `m` is the first.
    pub roots: Vec<f64>,
}

impl SteadyState {
    pub fn is_unique(&self) -> bool {
        self.roots.len() == 1
    }
}

/// `Q(M)` on the grid.
pub fn normalization_integral(model: &FiringRateModel, grid: &AgeGrid, m: f64, horizon: Horizon) -> f64 {
    let frozen = model.freeze(m);
    let mut acc = 0.0;
    let mut k_left = 0.0f64;
    for i in 0..grid.n_cells() {
        let p = frozen.cell(grid, i);
        acc += (-k_left).exp() * p.j;
        k_left += p.dk;
    }
    if horizon == Horizon::HalfLine {
        acc += (-k_left).exp() * frozen.tail(grid.x_max());
    }
    acc
}

fn g(model: &FiringRateModel, grid: &AgeGrid, m: f64, horizon: Horizon) -> f64 {
    m * normalization_integral(model, grid, m, horizon) - 1.0
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut f_lo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 || (f_mid.abs() <= tol && hi - lo <= tol) {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// All roots of `g` on `bracket`, located by a uniform scan and refined by bisection.
pub fn find_roots(model: &FiringRateModel, grid: &AgeGrid, opts: &SteadyOptions) -> Vec<f64> {
    let (lo, hi) = opts.bracket;
    let n = opts.scan_points.max(2);
    let xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let gs: Vec<f64> = xs.iter().map(|&m| g(model, grid, m, opts.horizon)).collect();
    let mut roots = Vec::new();
    for i in 0..n {
        if gs[i] == 0.0 {
            roots.push(xs[i]);
        } else if (gs[i] < 0.0) != (gs[i + 1] < 0.0) && gs[i + 1] != 0.0 {
            roots.push(bisect(|m| g(model, grid, m, opts.horizon), xs[i], xs[i + 1], 0.0));
        }
    }
    if gs[n] == 0.0 {
        roots.push(xs[n]);
    }
    roots
}

/// Steady state on `grid` with the default bracket and truncated horizon.
pub fn solve_m(
    model: &FiringRateModel,
    grid: &AgeGrid,
    bracket: (f64, f64),
    tol: f64,
) -> Result<SteadyState, SteadyStateError> {
    solve_m_with(
        model,
        grid,
        &SteadyOptions {
            bracket,
            tol,
            ..SteadyOptions::for_model(model)
        },
    )
}

pub fn solve_m_with(
    model: &FiringRateModel,
    grid: &AgeGrid,
    opts: &SteadyOptions,
) -> Result<SteadyState, SteadyStateError> {
    let (lo, hi) = opts.bracket;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(SteadyStateError::InvalidBracket(lo, hi));
    }
    if !(opts.tol > 0.0) {
        return Err(SteadyStateError::InvalidTolerance(opts.tol));
    }
    let roots = find_roots(model, grid, opts);
    let Some(&m) = roots.first() else {
        return Err(SteadyStateError::NoBracket { lo, hi });
    };
    if roots.len() > 1 {
        log::warn!(
            "steady-state equation has {} roots at lambda={}: {:?}",
            roots.len(),
            model.lambda(),
            roots
        );
    }
    Ok(assemble(model, grid, m, opts.horizon, roots))
}

/// Builds `F` and its diagnostics at a given activity.
pub fn assemble(
    model: &FiringRateModel,
    grid: &AgeGrid,
    m: f64,
    horizon: Horizon,
    roots: Vec<f64>,
) -> SteadyState {
    let kin = Kinetics::new(model, grid, m);
    let dx = grid.dx();
    let n = grid.n_cells();
    let mut values: Vec<f64> = (0..n)
        .map(|i| m * (-kin.cumulative[i]).exp() * kin.profiles[i].j / dx)
        .collect();
    if horizon == Horizon::HalfLine {
        let k_end = kin.cumulative[n - 1] + kin.profiles[n - 1].dk;
        values[n - 1] += m * (-k_end).exp() * kin.frozen.tail(grid.x_max()) / dx;
    }
    let interior = match horizon {
        Horizon::Truncated => n - 1,
        Horizon::HalfLine => n.saturating_sub(2),
    };
    let residual_ode = (0..interior)
        .map(|i| (values[i + 1] - kin.survival[i] * values[i]).abs() / dx)
        .fold(0.0, f64::max);
    let residual_activity = (kin.discharge(&values, dx) - m).abs();
    SteadyState {
        m,
        normalization_residual: g(model, grid, m, horizon).abs(),
        values,
        grid: *grid,
        lambda: model.lambda(),
        horizon,
        residual_ode,
        residual_activity,
        roots,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeRow {
    pub lambda: f64,
    pub roots: Vec<f64>,
    pub unique: bool,
}

/// Root census of the steady-state equation for each coupling in `lambdas`.
pub fn regime_scan(
    model: &FiringRateModel,
    lambdas: &[f64],
    grid: &AgeGrid,
    scan_points: usize,
    exec: Execution,
) -> Vec<RegimeRow> {
    exec.map(lambdas, |&lambda| {
        let roots = match model.with_lambda(lambda) {
            Ok(m) => find_roots(
                &m,
                grid,
                &SteadyOptions {
                    scan_points,
                    ..SteadyOptions::for_model(&m)
                },
            ),
            Err(_) => Vec::new(),
        };
        RegimeRow {
            lambda,
            unique: roots.len() == 1,
            roots,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::firing_rate::{RateKind, SmoothRate, ThresholdMap};
    use approx::assert_abs_diff_eq;

    fn half_line(model: &FiringRateModel) -> SteadyOptions {
        SteadyOptions {
            horizon: Horizon::HalfLine,
            ..SteadyOptions::for_model(model)
        }
    }

    #[test]
    fn constant_rate_closed_form() {
        let model = FiringRateModel::constant(2.0).unwrap();
        let grid = AgeGrid::new(1e-3, 10.0).unwrap();
        let ss = solve_m_with(&model, &grid, &half_line(&model)).unwrap();
        assert_abs_diff_eq!(ss.m, 2.0, epsilon = 1e-10);
        let err: f64 = grid
            .midpoints()
            .zip(&ss.values)
            .map(|(x, f)| (f - 2.0 * (-2.0 * x).exp()).abs() * grid.dx())
            .sum();
        assert!(err < 1e-3, "{err}");
        // truncated: M = k/(1 - e^{-kX})
        let tr = solve_m(&model, &grid, (1e-6, 2.002), 1e-12).unwrap();
        assert_abs_diff_eq!(tr.m, 2.0 / (1.0 - (-20.0f64).exp()), epsilon = 1e-12);
    }

    #[test]
    fn step_rate_at_zero_coupling() {
        let model = FiringRateModel::step(0.5, 0.25, 1.0, 0.0).unwrap();
        let grid = AgeGrid::new(1e-3, 10.0).unwrap();
        let ss = solve_m_with(&model, &grid, &half_line(&model)).unwrap();
        assert_abs_diff_eq!(ss.m, 2.0 / 3.0, epsilon = 1e-8);
        assert!(ss.is_unique());
        // F = M on [0, σ₊], then M e^{-(x - σ₊)}
        for (x, f) in grid.midpoints().zip(&ss.values).take(9000) {
            let exact = if x < 0.5 { ss.m } else { ss.m * (-(x - 0.5)).exp() };
            assert!((f - exact).abs() < 1e-3 * exact.max(1e-3) + 1e-6, "x={x}");
        }
    }

    #[test]
    fn residuals_are_small() {
        let grid = AgeGrid::new(2e-3, 10.0).unwrap();
        let models = [
            FiringRateModel::constant(1.3).unwrap(),
            FiringRateModel::step(0.5, 0.25, 1.0, 0.05).unwrap(),
            FiringRateModel::step(0.6, 0.1, 3.0, 2.0).unwrap(),
        ];
        for model in models {
            let tol = 1e-12;
            let ss = solve_m(&model, &grid, SteadyOptions::for_model(&model).bracket, tol).unwrap();
            assert!(ss.normalization_residual <= tol);
            assert!(ss.residual_ode <= 10.0 * tol, "{}", ss.residual_ode);
            assert!(ss.residual_activity <= 10.0 * tol, "{}", ss.residual_activity);
            assert_abs_diff_eq!(grid.integrate(&ss.values).unwrap(), 1.0, epsilon = 1e-12);
            assert!(ss.values.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn smooth_rate_against_fine_quadrature() {
        let model = FiringRateModel::new(
            RateKind::Smooth(SmoothRate {
                k0: 1.0,
                k1: 2.0,
                ramp: 0.3,
                gain: 1.5,
            }),
            0.1,
        )
        .unwrap();
        let grid = AgeGrid::new(1e-2, 10.0).unwrap();
        let ss = solve_m(&model, &grid, (1e-6, 2.0), 1e-13).unwrap();
        // oracle: 10^6-point midpoint quadrature of M ∫_0^X e^{-K(x, λM)} dx - 1
        let oracle_g = |m: f64| {
            let n = 1_000_000;
            let h = 10.0 / n as f64;
            m * (0..n)
                .map(|i| (-model.cumulative((i as f64 + 0.5) * h, m).unwrap()).exp() * h)
                .sum::<f64>()
                - 1.0
        };
        assert!(oracle_g(ss.m).abs() < 1e-10, "{}", oracle_g(ss.m));
    }

    #[test]
    fn tail_decays_like_half_rate() {
        let model = FiringRateModel::step(0.5, 0.25, 1.0, 0.5).unwrap();
        let grid = AgeGrid::new(1e-3, 10.0).unwrap();
        let ss = solve_m(&model, &grid, (1e-6, 1.0), 1e-12).unwrap();
        let max = ss.values.iter().cloned().fold(0.0, f64::max);
        let x0 = model.half_rate_age();
        let bound = (-model.k0() * (grid.x_max() - x0) / 2.0).exp() * max;
        assert!(*ss.values.last().unwrap() <= bound);
        // nonincreasing past the threshold
        let start = (0.6 / grid.dx()) as usize;
        assert!(ss.values[start..].windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn refinement_moves_m_by_order_dx() {
        let model = FiringRateModel::step(0.5, 0.25, 1.0, 0.3).unwrap();
        let ms: Vec<f64> = [4e-3, 2e-3, 1e-3]
            .iter()
            .map(|&dx| {
                let grid = AgeGrid::new(dx, 10.0).unwrap();
                solve_m(&model, &grid, (1e-6, 1.0), 1e-13).unwrap().m
            })
            .collect();
        assert!((ms[0] - ms[1]).abs() <= 4e-3);
        assert!((ms[1] - ms[2]).abs() <= 2e-3);
    }

    #[test]
    fn missing_bracket_is_reported() {
        let model = FiringRateModel::constant(2.0).unwrap();
        let grid = AgeGrid::new(1e-2, 10.0).unwrap();
        assert!(matches!(
            solve_m(&model, &grid, (0.1, 1.0), 1e-12),
            Err(SteadyStateError::NoBracket { .. })
        ));
        assert!(solve_m(&model, &grid, (1.0, 0.5), 1e-12).is_err());
    }

    #[test]
    fn regime_scan_constant_and_step() {
        let grid = AgeGrid::new(1e-2, 10.0).unwrap();
        let constant = FiringRateModel::constant(2.0).unwrap();
        let rows = regime_scan(&constant, &[0.0, 1.0, 5.0], &grid, 100, Execution::Parallel);
        for r in &rows {
            assert!(r.unique);
            assert_abs_diff_eq!(r.roots[0], 2.0, epsilon = 1e-8);
        }
        let step = FiringRateModel::step(0.5, 0.25, 1.0, 0.0).unwrap();
        let rows = regime_scan(&step, &[0.0], &grid, 100, Execution::Sequential);
        assert!(rows[0].unique);
        assert_abs_diff_eq!(rows[0].roots[0], 1.0 / (1.5 - (-9.5f64).exp()), epsilon = 1e-10);
    }

    #[test]
    fn steep_logistic_threshold_has_several_steady_states() {
        let model = FiringRateModel::new(
            RateKind::Step(ThresholdMap::Logistic {
                sigma_plus: 0.9,
                sigma_minus: 0.05,
                center: 0.5,
                steepness: 60.0,
            }),
            1.0,
        )
        .unwrap();
        let grid = AgeGrid::new(1e-2, 10.0).unwrap();
        let rows = regime_scan(&model, &[0.0, 0.8, 5.0], &grid, 400, Execution::Parallel);
        assert!(rows[0].unique);
        assert!(rows.iter().any(|r| r.roots.len() >= 3), "{rows:?}");
    }
}
