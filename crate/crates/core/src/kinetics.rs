//! Cell-level firing kinetics at a frozen activity.
//!
//! Within a time step every cell carries the sub-cell shape `e^{−(K(x) − K(x_i))}`.
//! Under that shape the fraction of cell `i` that survives to cell `i + 1`
//! is `s_i = e^{−ΔK_i}·j_{i+1}/j_i` and the cell's mean firing rate is
//! `r_i = (1 − e^{−ΔK_i})/j_i`, where `ΔK_i` and `j_i` come from
//! [`CellProfile`]. The last cell has no successor: all of its mass either
//! fires or leaves the horizon, and `r_{n−1} = 1/j_{n−1}` accounts for both.
//!
//! With these choices the cell averages of `M·e^{−K(x, λM)}` are an exact
//! discrete fixed point and the discharge `Σ r_i F_i dx` equals `M` exactly.

use crate::firing_rate::{CellProfile, FiringRateModel, FrozenRate};
use crate::grid::AgeGrid;

/// Per-cell survival and rate arrays for one activity value.
#[derive(Debug, Clone, PartialEq)]
pub struct Kinetics {
    pub frozen: FrozenRate,
    /// `K(x_i)` at the left edges.
    pub cumulative: Vec<f64>,
    pub profiles: Vec<CellProfile>,
    pub rate: Vec<f64>,
    /// Survival to the next cell; the last entry is 0.
    pub survival: Vec<f64>,
}

impl Kinetics {
    pub fn new(model: &FiringRateModel, grid: &AgeGrid, mu: f64) -> Self {
        Self::from_frozen(model.freeze(mu), grid)
    }

    pub fn from_frozen(frozen: FrozenRate, grid: &AgeGrid) -> Self {
        let n = grid.n_cells();
        let profiles: Vec<CellProfile> = (0..n)
            .map(|i| frozen.cell(grid, i))
            .collect();
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0;
        for p in &profiles {
            cumulative.push(acc);
            acc += p.dk;
        }
        let rate = (0..n)
            .map(|i| cell_rate(&profiles[i], i + 1 == n))
            .collect();
        let survival = (0..n)
            .map(|i| {
                if i + 1 == n {
                    0.0
                } else {
                    ((-profiles[i].dk).exp() * profiles[i + 1].j / profiles[i].j).min(1.0)
                }
            })
            .collect();
        Self {
            frozen,
            cumulative,
            profiles,
            rate,
            survival,
        }
    }

    /// `P[f] = Σ r_i f_i dx`.
    pub fn discharge(&self, values: &[f64], dx: f64) -> f64 {
        self.rate.iter().zip(values).map(|(r, f)| r * f).sum::<f64>() * dx
    }
}

fn cell_rate(p: &CellProfile, last: bool) -> f64 {
    if last {
        1.0 / p.j
    } else {
        -(-p.dk).exp_m1() / p.j
    }
}

/// `μ ↦ P[f, μ]` for a fixed density, evaluated without rebuilding full
/// [`Kinetics`] where the rate family allows it.
pub struct DischargeFunctional<'a> {
    model: &'a FiringRateModel,
    grid: &'a AgeGrid,
    values: &'a [f64],
    /// `prefix[i] = Σ_{l<i} f_l dx`.
    prefix: Vec<f64>,
}

impl<'a> DischargeFunctional<'a> {
    pub fn new(model: &'a FiringRateModel, grid: &'a AgeGrid, values: &'a [f64]) -> Self {
        let mut prefix = Vec::with_capacity(values.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for v in values {
            acc += v * grid.dx();
            prefix.push(acc);
        }
        Self {
            model,
            grid,
            values,
            prefix,
        }
    }

    pub fn values(&self) -> &[f64] {
        self.values
    }

    pub fn model(&self) -> &FiringRateModel {
        self.model
    }

    pub fn grid(&self) -> &AgeGrid {
        self.grid
    }

    fn cell_term(&self, frozen: &FrozenRate, i: usize) -> f64 {
        let n = self.grid.n_cells();
        let p = frozen.cell(&self.grid, i);
        cell_rate(&p, i + 1 == n) * self.values[i] * self.grid.dx()
    }

    /// Mass of cells `lo..hi`.
    fn mass(&self, lo: usize, hi: usize) -> f64 {
        self.prefix[hi] - self.prefix[lo]
    }

    pub fn eval(&self, mu: f64) -> f64 {
        let frozen = self.model.freeze(mu);
        let n = self.grid.n_cells();
        match frozen {
            FrozenRate::Constant { k } => {
                // interior cells fire at exactly k
                k * self.mass(0, n - 1) + self.cell_term(&frozen, n - 1)
            }
            FrozenRate::Step { sigma } => {
                let c = ((sigma / self.grid.dx()).floor() as usize).min(n - 1);
                if c + 1 >= n {
                    return self.cell_term(&frozen, n - 1);
                }
                // cells strictly above the threshold cell fire at rate 1
                self.cell_term(&frozen, c) + self.mass(c + 1, n - 1) + self.cell_term(&frozen, n - 1)
            }
            FrozenRate::Smooth { .. } => (0..n).map(|i| self.cell_term(&frozen, i)).sum(),
        }
    }
}
