//! Uniform truncated age mesh, quadrature and projection of initial data.
//!
//! Cell `i` covers `[i·dx, (i+1)·dx)`; the last cell ends at the horizon `x_max`.
//! Densities are stored as cell averages, so the midpoint rule is exact on them.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("dx must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("x_max must be a positive multiple of dx, got x_max={x_max} with dx={dx}")]
    InvalidHorizon { dx: f64, x_max: f64 },
    #[error("expected {expected} cell values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("initial datum has no mass on [0, {0}]")]
    ZeroMass(f64),
    #[error("initial datum is negative or not finite at x={0}")]
    InvalidValue(f64),
    #[error("invalid initial datum: {0}")]
    InvalidDatum(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgeGrid {
    dx: f64,
    n_cells: usize,
}

impl AgeGrid {
    /// Grid of width `dx` up to `x_max`, which must be an integer multiple of `dx`
    /// up to rounding.
    pub fn new(dx: f64, x_max: f64) -> Result<Self, GridError> {
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(GridError::InvalidStep(dx));
        }
        let ratio = x_max / dx;
        let n = ratio.round();
        if !(x_max > 0.0 && ratio.is_finite() && n >= 1.0 && (ratio - n).abs() <= 1e-6 * n.max(1.0)) {
            return Err(GridError::InvalidHorizon { dx, x_max });
        }
        Ok(Self {
            dx,
            n_cells: n as usize,
        })
    }

    pub fn with_cells(dx: f64, n_cells: usize) -> Result<Self, GridError> {
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(GridError::InvalidStep(dx));
        }
        if n_cells == 0 {
            return Err(GridError::InvalidHorizon { dx, x_max: 0.0 });
        }
        Ok(Self { dx, n_cells })
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn x_max(&self) -> f64 {
        self.n_cells as f64 * self.dx
    }

    /// Left edge of cell `i` (`i == n_cells` gives the horizon).
    pub fn edge(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_cells).map(|i| self.midpoint(i))
    }

    fn check_len(&self, len: usize) -> Result<(), GridError> {
        if len == self.n_cells {
            Ok(())
        } else {
            Err(GridError::LengthMismatch {
                expected: self.n_cells,
                got: len,
            })
        }
    }

    /// `Σ values_i·dx`.
    pub fn integrate(&self, values: &[f64]) -> Result<f64, GridError> {
        self.check_len(values.len())?;
        Ok(values.iter().sum::<f64>() * self.dx)
    }

    /// `‖u − v‖_{L¹}` of two cell-average arrays.
    pub fn l1_distance(&self, u: &[f64], v: &[f64]) -> Result<f64, GridError> {
        self.check_len(u.len())?;
        self.check_len(v.len())?;
        Ok(u.iter().zip(v).map(|(a, b)| (a - b).abs()).sum::<f64>() * self.dx)
    }

    /// `∫(1 + x^q)|f| dx` with `x` at cell midpoints.
    pub fn l1q_norm(&self, values: &[f64], q: f64) -> Result<f64, GridError> {
        self.check_len(values.len())?;
        Ok(values
            .iter()
            .enumerate()
            .map(|(i, v)| (1.0 + self.midpoint(i).powf(q)) * v.abs())
            .sum::<f64>()
            * self.dx)
    }

    /// Cell averages by midpoint sampling, rescaled to unit mass.
    pub fn project(&self, f0: impl Fn(f64) -> f64) -> Result<Projection, GridError> {
        let mut values = Vec::with_capacity(self.n_cells);
        for x in self.midpoints() {
            let v = f0(x);
            if !(v >= 0.0 && v.is_finite()) {
                return Err(GridError::InvalidValue(x));
            }
            values.push(v);
        }
        let raw_mass = values.iter().sum::<f64>() * self.dx;
        let tail_mass = self.tail_integral(&f0);
        Projection::normalize(values, raw_mass, tail_mass, self.x_max())
    }

    /// Midpoint integral of `f` over `[x_max, 3·x_max]` on the same mesh width.
    fn tail_integral(&self, f: &impl Fn(f64) -> f64) -> f64 {
        let x_max = self.x_max();
        (0..2 * self.n_cells)
            .map(|i| f(x_max + (i as f64 + 0.5) * self.dx).max(0.0))
            .sum::<f64>()
            * self.dx
    }
}

/// Unit-mass cell averages plus the mass that fell beyond the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub state: DensityState,
    /// Mass of the raw datum on `[x_max, ∞)` (estimated), before renormalization.
    pub tail_mass: f64,
}

impl Projection {
    fn normalize(
        mut values: Vec<f64>,
        raw_mass: f64,
        tail_mass: f64,
        x_max: f64,
    ) -> Result<Self, GridError> {
        if !(raw_mass > 0.0) {
            return Err(GridError::ZeroMass(x_max));
        }
        for v in values.iter_mut() {
            *v /= raw_mass;
        }
        Ok(Self {
            state: DensityState::new(values, 1.0),
            tail_mass,
        })
    }
}

/// A density on the grid together with the scalars that travel with it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DensityState {
    pub values: Vec<f64>,
    pub mass: f64,
    pub activity: f64,
    pub discharge: f64,
    pub time: f64,
}

impl DensityState {
    pub fn new(values: Vec<f64>, mass: f64) -> Self {
        Self {
            values,
            mass,
            activity: 0.0,
            discharge: 0.0,
            time: 0.0,
        }
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &b| a.max(b))
    }
}

/// Named initial data.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDatum {
    /// Uniform density on `[a, b]`.
    Uniform { a: f64, b: f64 },
    /// `rate·e^{−rate·x}`.
    Exponential { rate: f64 },
    /// Unit point mass at age `at`, placed in the cell that contains it.
    Spike { at: f64 },
    /// Cell values on an equally spaced mesh covering `[0, x_max]`.
    Sampled(Vec<f64>),
}

impl InitialDatum {
    pub fn uniform01() -> Self {
        Self::Uniform { a: 0.0, b: 1.0 }
    }

    pub fn exp2() -> Self {
        Self::Exponential { rate: 2.0 }
    }

    pub fn project(&self, grid: &AgeGrid) -> Result<Projection, GridError> {
        match self {
            Self::Uniform { a, b } => {
                let (a, b) = (*a, *b);
                if !(a >= 0.0 && b > a) {
                    return Err(GridError::InvalidDatum(format!(
                        "uniform support needs 0 <= a < b, got [{a}, {b}]"
                    )));
                }
                grid.project(|x| if x >= a && x <= b { 1.0 / (b - a) } else { 0.0 })
            }
            Self::Exponential { rate } => {
                let rate = *rate;
                if !(rate > 0.0) {
                    return Err(GridError::InvalidDatum(format!(
                        "exponential rate must be positive, got {rate}"
                    )));
                }
                grid.project(|x| rate * (-rate * x).exp())
            }
            Self::Spike { at } => {
                if !(*at >= 0.0 && *at < grid.x_max()) {
                    return Err(GridError::InvalidDatum(format!(
                        "spike location {at} outside [0, {})",
                        grid.x_max()
                    )));
                }
                let cell = ((at / grid.dx()) as usize).min(grid.n_cells() - 1);
                let mut values = vec![0.0; grid.n_cells()];
                values[cell] = 1.0 / grid.dx();
                Ok(Projection {
                    state: DensityState::new(values, 1.0),
                    tail_mass: 0.0,
                })
            }
            Self::Sampled(samples) => {
                if samples.is_empty() {
                    return Err(GridError::InvalidDatum("sampled datum is empty".into()));
                }
                let width = grid.x_max() / samples.len() as f64;
                grid.project(|x| samples[((x / width) as usize).min(samples.len() - 1)])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn integrate_zero_and_indicator() {
        let g = AgeGrid::new(0.1, 10.0).unwrap();
        assert_eq!(g.n_cells(), 100);
        assert_eq!(g.integrate(&vec![0.0; 100]).unwrap(), 0.0);
        assert_abs_diff_eq!(g.integrate(&vec![1.0; 100]).unwrap(), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn integrate_length_mismatch() {
        let g = AgeGrid::new(0.1, 1.0).unwrap();
        assert_eq!(
            g.integrate(&[1.0; 3]),
            Err(GridError::LengthMismatch {
                expected: 10,
                got: 3
            })
        );
    }

    #[test]
    fn integrate_exponential_density() {
        let g = AgeGrid::new(1e-3, 10.0).unwrap();
        let vals: Vec<f64> = g.midpoints().map(|x| 2.0 * (-2.0 * x).exp()).collect();
        assert_abs_diff_eq!(g.integrate(&vals).unwrap(), 1.0 - (-20.0f64).exp(), epsilon = 1e-3);
    }

    #[test]
    fn bad_grids_are_rejected() {
        assert!(AgeGrid::new(0.0, 1.0).is_err());
        assert!(AgeGrid::new(-0.1, 1.0).is_err());
        assert!(AgeGrid::new(0.3, 1.0).is_err());
        assert!(AgeGrid::new(0.1, -1.0).is_err());
        assert!(AgeGrid::with_cells(0.1, 0).is_err());
    }

    #[test]
    fn uniform_projection_is_exact() {
        let g = AgeGrid::new(0.01, 10.0).unwrap();
        let p = InitialDatum::uniform01().project(&g).unwrap();
        assert_abs_diff_eq!(g.integrate(&p.state.values).unwrap(), 1.0, epsilon = 1e-12);
        for (i, v) in p.state.values.iter().enumerate() {
            let expected = if i < 100 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(*v, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn exponential_projection_reports_tail() {
        let g = AgeGrid::new(1e-3, 5.0).unwrap();
        let p = InitialDatum::exp2().project(&g).unwrap();
        assert_abs_diff_eq!(g.integrate(&p.state.values).unwrap(), 1.0, epsilon = 1e-12);
        let tail = (-10.0f64).exp();
        assert!((p.tail_mass - tail).abs() < 1e-6 * tail, "{} vs {}", p.tail_mass, tail);
    }

    #[test]
    fn spike_occupies_one_cell() {
        let g = AgeGrid::new(0.01, 1.0).unwrap();
        let p = InitialDatum::Spike { at: 0.123 }.project(&g).unwrap();
        assert_eq!(p.state.values.iter().filter(|v| **v > 0.0).count(), 1);
        assert_abs_diff_eq!(p.state.values[12], 100.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_datum_is_degenerate() {
        let g = AgeGrid::new(0.01, 1.0).unwrap();
        assert_eq!(g.project(|_| 0.0), Err(GridError::ZeroMass(g.x_max())));
        assert!(g.project(|x| if x > 0.5 { -1.0 } else { 1.0 }).is_err());
    }

    #[test]
    fn l1q_norm_of_uniform() {
        let g = AgeGrid::new(1e-3, 2.0).unwrap();
        let p = InitialDatum::uniform01().project(&g).unwrap();
        // ∫_0^1 (1 + x) dx
        assert_abs_diff_eq!(g.l1q_norm(&p.state.values, 1.0).unwrap(), 1.5, epsilon = 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn integrate_is_linear(
                u in proptest::collection::vec(-5.0f64..5.0, 50),
                v in proptest::collection::vec(-5.0f64..5.0, 50),
                a in -3.0f64..3.0, b in -3.0f64..3.0,
            ) {
                let g = AgeGrid::with_cells(0.02, 50).unwrap();
                let w: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
                let lhs = g.integrate(&w).unwrap();
                let rhs = a * g.integrate(&u).unwrap() + b * g.integrate(&v).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            }

            #[test]
            fn projection_has_unit_mass(
                samples in proptest::collection::vec(0.0f64..10.0, 1..40),
                bump in 0.1f64..1.0,
            ) {
                let g = AgeGrid::new(0.01, 4.0).unwrap();
                let mut s = samples.clone();
                s[0] += bump;
                let p = InitialDatum::Sampled(s).project(&g).unwrap();
                prop_assert!((g.integrate(&p.state.values).unwrap() - 1.0).abs() <= 1e-12);
            }
        }
    }
}
