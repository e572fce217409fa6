//! The activity constraint `μ = w·P[f, μ] + c`.
//!
//! Without delay `w = 1, c = 0` and this is `Φ(f, μ) = P[f, μ] − μ = 0`. With a
//! delay kernel `w` is the weight of the current discharge and `c` collects
//! the past ones.

use crate::firing_rate::FiringRateModel;
use crate::grid::AgeGrid;
use crate::kinetics::DischargeFunctional;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActivityError {
    #[error("activity constraint has no root in [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },
    #[error("activity constraint has {} roots: {roots:?}", roots.len())]
    Ambiguous { roots: Vec<f64> },
    #[error("activity solver did not reach |Phi| <= {tol} (best residual {residual})")]
    NotConverged { tol: f64, residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivityOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Uniform scan points used to detect missing or multiple roots.
    pub scan_points: usize,
}

impl Default for ActivityOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200,
            scan_points: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivityMethod {
    FixedPoint,
    Bisection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivitySolution {
    pub mu: f64,
    /// `|w·P[f, μ] + c − μ|`.
    pub residual: f64,
    pub iterations: usize,
    pub method: ActivityMethod,
}

/// One instance of the constraint: a density plus the delay split `(w, c)`.
pub struct ActivityProblem<'a> {
    discharge: &'a DischargeFunctional<'a>,
    weight: f64,
    offset: f64,
    lo: f64,
    hi: f64,
}

impl<'a> ActivityProblem<'a> {
    /// `μ = P[f, μ]` searched on `[lo, max(hi, sup P)]`.
    pub fn new(discharge: &'a DischargeFunctional<'a>, bracket: (f64, f64)) -> Self {
        Self::with_delay(discharge, 1.0, 0.0, bracket)
    }

    pub fn with_delay(
        discharge: &'a DischargeFunctional<'a>,
        weight: f64,
        offset: f64,
        bracket: (f64, f64),
    ) -> Self {
        let sup = weight * discharge.eval(1e300) + offset;
        Self {
            discharge,
            weight,
            offset,
            lo: bracket.0.max(0.0),
            hi: bracket.1.max(sup),
        }
    }

    pub fn phi(&self, mu: f64) -> f64 {
        self.weight * self.discharge.eval(mu) + self.offset - mu
    }

    fn image(&self, mu: f64) -> f64 {
        self.weight * self.discharge.eval(mu) + self.offset
    }

    /// Brackets of every sign change of `Φ` on the search interval.
    pub fn scan(&self, points: usize) -> Vec<(f64, f64)> {
        let n = points.max(2);
        let xs: Vec<f64> = (0..=n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / n as f64)
            .collect();
        let ps: Vec<f64> = xs.iter().map(|&m| self.phi(m)).collect();
        let mut brackets = Vec::new();
        for i in 0..n {
            if ps[i] == 0.0 {
                brackets.push((xs[i], xs[i]));
            } else if ps[i + 1] != 0.0 && (ps[i] < 0.0) != (ps[i + 1] < 0.0) {
                brackets.push((xs[i], xs[i + 1]));
            }
        }
        if ps[n] == 0.0 {
            brackets.push((xs[n], xs[n]));
        }
        brackets
    }

    fn bisect(&self, mut a: f64, mut b: f64, tol: f64) -> (f64, usize) {
        if a == b {
            return (a, 0);
        }
        let mut fa = self.phi(a);
        let mut iters = 0;
        loop {
            iters += 1;
            let mid = 0.5 * (a + b);
            let fm = self.phi(mid);
            if fm.abs() <= tol || mid <= a || mid >= b || iters >= 200 {
                return (mid, iters);
            }
            if (fm < 0.0) == (fa < 0.0) {
                a = mid;
                fa = fm;
            } else {
                b = mid;
            }
        }
    }

    fn unique_bracket(&self, points: usize) -> Result<(f64, f64), ActivityError> {
        let brackets = self.scan(points);
        match brackets.len() {
            0 => Err(ActivityError::NoRoot {
                lo: self.lo,
                hi: self.hi,
            }),
            1 => Ok(brackets[0]),
            _ => Err(ActivityError::Ambiguous {
                roots: brackets
                    .iter()
                    .map(|&(a, b)| self.bisect(a, b, 0.0).0)
                    .collect(),
            }),
        }
    }

    /// Damped fixed-point iteration from `warm`, falling back to bisection.
    ///
    /// With `check_uniqueness` the search interval is scanned first and
    /// several roots are reported as [`ActivityError::Ambiguous`].
    pub fn solve(
        &self,
        warm: Option<f64>,
        opts: &ActivityOptions,
        check_uniqueness: bool,
    ) -> Result<ActivitySolution, ActivityError> {
        let bracket = if check_uniqueness {
            Some(self.unique_bracket(opts.scan_points)?)
        } else {
            None
        };
        let start = warm.unwrap_or_else(|| bracket.map_or(self.image(self.lo), |(a, b)| 0.5 * (a + b)));
        let mut mu = start.clamp(self.lo, self.hi);
        let mut damping = 1.0;
        let mut prev_step = 0.0;
        let mut best = f64::INFINITY;
        let mut stalled = 0;
        for it in 0..opts.max_iter {
            let next = self.image(mu);
            let step = next - mu;
            if step.abs() <= opts.tol {
                return Ok(ActivitySolution {
                    mu,
                    residual: step.abs(),
                    iterations: it,
                    method: ActivityMethod::FixedPoint,
                });
            }
            if it > 0 && step * prev_step < 0.0 {
                damping = 0.5;
            }
            if step.abs() < 0.9 * best {
                best = step.abs();
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= 5 {
                    break;
                }
            }
            prev_step = step;
            mu = (mu + damping * step).clamp(self.lo, self.hi);
        }
        let (a, b) = match bracket {
            Some(b) => b,
            None => self.unique_bracket(opts.scan_points)?,
        };
        let (mu, iterations) = self.bisect(a, b, opts.tol);
        let residual = self.phi(mu).abs();
        if residual > opts.tol {
            return Err(ActivityError::NotConverged {
                tol: opts.tol,
                residual,
            });
        }
        Ok(ActivitySolution {
            mu,
            residual,
            iterations,
            method: ActivityMethod::Bisection,
        })
    }
}

/// Solves `P[f, μ] = μ` for the density `values`, scanning `bracket`
/// (widened to contain every possible root) for uniqueness.
pub fn solve_activity_implicit(
    model: &FiringRateModel,
    grid: &AgeGrid,
    values: &[f64],
    bracket: (f64, f64),
    opts: &ActivityOptions,
) -> Result<ActivitySolution, ActivityError> {
    let discharge = DischargeFunctional::new(model, grid, values);
    ActivityProblem::new(&discharge, bracket).solve(None, opts, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::firing_rate::{RateKind, ThresholdMap};
    use crate::grid::InitialDatum;
    use crate::kinetics::Kinetics;
    use crate::steady_state::solve_m;
    use approx::assert_abs_diff_eq;

    fn uniform(grid: &AgeGrid) -> Vec<f64> {
        InitialDatum::uniform01().project(grid).unwrap().state.values
    }

    #[test]
    fn zero_coupling_needs_one_iteration() {
        let grid = AgeGrid::new(1e-3, 10.0).unwrap();
        let model = FiringRateModel::step(0.5, 0.25, 1.0, 0.0).unwrap();
        let f = uniform(&grid);
        let sol = solve_activity_implicit(&model, &grid, &f, (0.0, 1.0), &ActivityOptions::default()).unwrap();
        let direct = Kinetics::new(&model, &grid, 0.0).discharge(&f, grid.dx());
        assert_abs_diff_eq!(sol.mu, direct, epsilon = 1e-14);
        assert!(sol.iterations <= 1);
        assert_abs_diff_eq!(sol.mu, 0.5, epsilon = 2e-3);
    }

    #[test]
    fn steady_density_returns_steady_activity() {
        let grid = AgeGrid::new(1e-3, 10.0).unwrap();
        let model = FiringRateModel::step(0.5, 0.25, 1.0, 0.4).unwrap();
        let ss = solve_m(&model, &grid, (1e-6, 1.0), 1e-13).unwrap();
        let sol = solve_activity_implicit(&model, &grid, &ss.values, (0.0, 1.0), &ActivityOptions::default()).unwrap();
        assert_abs_diff_eq!(sol.mu, ss.m, epsilon = 1e-11);
    }

    #[test]
    fn weak_step_rate_against_bisection_oracle() {
        let grid = AgeGrid::new(1e-3, 10.0).unwrap();
        let model = FiringRateModel::step(0.5, 0.25, 1.0, 0.05).unwrap();
        let f = uniform(&grid);
        let sol = solve_activity_implicit(&model, &grid, &f, (0.0, 1.0), &ActivityOptions::default()).unwrap();
        // independent Φ through the full kinetics arrays
        let phi = |mu: f64| Kinetics::new(&model, &grid, mu).discharge(&f, grid.dx()) - mu;
        assert!(phi(sol.mu).abs() < 1e-10);
        let (mut a, mut b) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if phi(mid) > 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        assert_abs_diff_eq!(sol.mu, 0.5 * (a + b), epsilon = 1e-8);
    }

    #[test]
    fn steep_threshold_is_ambiguous() {
        let grid = AgeGrid::new(1e-3, 10.0).unwrap();
        let model = FiringRateModel::new(
            RateKind::Step(ThresholdMap::Logistic {
                sigma_plus: 0.75,
                sigma_minus: 0.25,
                center: 0.5,
                steepness: 200.0,
            }),
            0.8,
        )
        .unwrap();
        let f = uniform(&grid);
        match solve_activity_implicit(&model, &grid, &f, (0.0, 1.0), &ActivityOptions::default()) {
            Err(ActivityError::Ambiguous { roots }) => assert!(roots.len() >= 2, "{roots:?}"),
            other => panic!("expected ambiguity, got {other:?}"),
        }
    }

    #[test]
    fn delay_split_solves_shifted_equation() {
        let grid = AgeGrid::new(1e-2, 10.0).unwrap();
        let model = FiringRateModel::step(0.5, 0.25, 1.0, 0.3).unwrap();
        let f = uniform(&grid);
        let d = DischargeFunctional::new(&model, &grid, &f);
        let prob = ActivityProblem::with_delay(&d, 0.01, 0.6, (0.0, 1.0));
        let sol = prob.solve(Some(0.2), &ActivityOptions::default(), true).unwrap();
        assert_abs_diff_eq!(0.01 * d.eval(sol.mu) + 0.6, sol.mu, epsilon = 1e-12);
    }
}
