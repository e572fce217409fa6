//! Discretized linear generator around a steady state and its spectrum.
//!
//! The generator freezes the rate at `k_λ = k(·, λM)` and keeps the boundary
//! source `δ₀·P[g]`. Its discretization matches the time stepper: upwind
//! transport between cells, the cell rates `r_i` of [`Kinetics`], and a first
//! row collecting every cell's discharge. Columns therefore sum to zero.

use crate::delay_kernel::DelayKernel;
use crate::firing_rate::FiringRateModel;
use crate::grid::AgeGrid;
use crate::kinetics::Kinetics;
use crate::steady_state::SteadyState;
use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;
use thiserror::Error;

/// Largest matrix handed to the dense eigensolver by default.
pub const DENSE_BUDGET: usize = 4000;

#[derive(Debug, Error)]
pub enum LinearError {
    #[error("steady state grid (dx={ss_dx}, n={ss_n}) does not match (dx={dx}, n={n})")]
    GridMismatch {
        dx: f64,
        n: usize,
        ss_dx: f64,
        ss_n: usize,
    },
    #[error("matrix size {size} exceeds the dense solver budget {budget}")]
    TooLarge { size: usize, budget: usize },
    #[error("eigensolver failed on a {size}x{size} matrix (dumped to {dump})")]
    EigenFailure { size: usize, dump: String },
    #[error("a Dirac kernel has no delay variable; use build_generator")]
    DiracKernel,
    #[error("delay mesh width {dy} differs from the kernel time step {dt}")]
    KernelMesh { dy: f64, dt: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    size: usize,
    /// Row-major entries.
    data: Vec<f64>,
    pub grid: AgeGrid,
    pub lambda: f64,
    pub m: f64,
    /// Size of the age block; equals `size` without delay.
    pub age_cells: usize,
    /// Activity read-out `D[v] = Σ w_j v_j` over the delay block.
    pub readout: Option<Vec<f64>>,
    /// Steady density the kernel vector is compared against.
    pub reference: Vec<f64>,
}

impl GeneratorMatrix {
    fn zeros(size: usize, grid: AgeGrid, steady: &SteadyState) -> Self {
        Self {
            size,
            data: vec![0.0; size * size],
            grid,
            lambda: steady.lambda,
            m: steady.m,
            age_cells: grid.n_cells(),
            readout: None,
            reference: steady.values.clone(),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.size + j] += v;
    }

    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        assert_eq!(g.len(), self.size, "vector length must match the matrix");
        self.data
            .chunks_exact(self.size)
            .map(|row| row.iter().zip(g).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `Σ_i L_ij` over the age rows, for each column.
    pub fn age_column_sums(&self) -> Vec<f64> {
        (0..self.size)
            .map(|j| (0..self.age_cells).map(|i| self.get(i, j)).sum())
            .collect()
    }

    /// Activity read-out of the delay block of `state`.
    pub fn read_activity(&self, state: &[f64]) -> Option<f64> {
        self.readout.as_ref().map(|w| {
            w.iter()
                .zip(&state[self.age_cells..])
                .map(|(a, b)| a * b)
                .sum()
        })
    }

    fn to_faer(&self) -> Mat<f64> {
        Mat::from_fn(self.size, self.size, |i, j| self.get(i, j))
    }

    fn dump(&self) -> String {
        let path = std::env::temp_dir().join(format!("elapsed-generator-{}.csv", self.size));
        let body: String = self
            .data
            .chunks_exact(self.size)
            .map(|row| {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
                cells.join(",") + "\n"
            })
            .collect();
        match std::fs::write(&path, body) {
            Ok(()) => path.display().to_string(),
            Err(e) => format!("<dump failed: {e}>"),
        }
    }
}

fn check_grid(grid: &AgeGrid, steady: &SteadyState) -> Result<(), LinearError> {
    if steady.grid.n_cells() != grid.n_cells() || (steady.grid.dx() - grid.dx()).abs() > 1e-12 * grid.dx() {
        return Err(LinearError::GridMismatch {
            dx: grid.dx(),
            n: grid.n_cells(),
            ss_dx: steady.grid.dx(),
            ss_n: steady.grid.n_cells(),
        });
    }
    Ok(())
}

fn fill_age_block(mat: &mut GeneratorMatrix, kin: &Kinetics) {
    let n = mat.age_cells;
    let inv = 1.0 / mat.grid.dx();
    for i in 0..n {
        let out = if i + 1 == n { 0.0 } else { inv };
        mat.add(i, i, -out - kin.rate[i]);
        if i > 0 {
            mat.add(i, i - 1, inv);
        }
        mat.add(0, i, kin.rate[i]);
    }
}

/// Generator of the linear equation frozen at the steady activity.
pub fn build_generator(
    model: &FiringRateModel,
    grid: &AgeGrid,
    steady: &SteadyState,
) -> Result<GeneratorMatrix, LinearError> {
    check_grid(grid, steady)?;
    let kin = Kinetics::new(model, grid, steady.m);
    let mut mat = GeneratorMatrix::zeros(grid.n_cells(), *grid, steady);
    fill_age_block(&mut mat, &kin);
    Ok(mat)
}

/// Two-component system `(g, v)`: `g` as in [`build_generator`], `v` the
/// discharge history transported along the delay axis `y_grid` and fed at
/// `y = 0` by the same discharge `P[g]`.
pub fn build_delay_system(
    model: &FiringRateModel,
    grid: &AgeGrid,
    steady: &SteadyState,
    kernel: &DelayKernel,
    y_grid: &AgeGrid,
) -> Result<GeneratorMatrix, LinearError> {
    if kernel.is_dirac() {
        return Err(LinearError::DiracKernel);
    }
    if (kernel.dt() - y_grid.dx()).abs() > 1e-12 * y_grid.dx() {
        return Err(LinearError::KernelMesh {
            dy: y_grid.dx(),
            dt: kernel.dt(),
        });
    }
    check_grid(grid, steady)?;
    let kin = Kinetics::new(model, grid, steady.m);
    let n = grid.n_cells();
    let ny = y_grid.n_cells();
    let mut mat = GeneratorMatrix::zeros(n + ny, *grid, steady);
    fill_age_block(&mut mat, &kin);
    let inv_dy = 1.0 / y_grid.dx();
    for i in 0..ny {
        mat.add(n + i, n + i, -inv_dy);
        if i > 0 {
            mat.add(n + i, n + i - 1, inv_dy);
        }
    }
    for j in 0..n {
        mat.add(n, j, kin.rate[j] * grid.dx() * inv_dy);
    }
    let mut w: Vec<f64> = kernel.weights().iter().take(ny).copied().collect();
    w.resize(ny, 0.0);
    let total: f64 = w.iter().sum();
    mat.readout = Some(w.into_iter().map(|v| v / total).collect());
    Ok(mat)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// Sorted by decreasing real part.
    pub eigenvalues: Vec<Complex64>,
    /// Eigenvalue nearest the origin.
    pub zero: Complex64,
    /// Largest real part among the other eigenvalues.
    pub gap: f64,
    /// Number of eigenvalues with `|z| < 5·dx`.
    pub near_zero: usize,
    /// Age part of the eigenvector of `zero`, unit `L¹` norm, positive.
    pub kernel_vector: Vec<f64>,
    /// `‖kernel_vector − F‖_{L¹}`.
    pub kernel_match: f64,
}

/// Dense spectrum of `mat`; `k_eigs > 0` keeps only the leading eigenvalues
/// in the report (the gap always uses all of them).
pub fn spectrum(mat: &GeneratorMatrix, k_eigs: usize) -> Result<SpectrumReport, LinearError> {
    spectrum_with_budget(mat, k_eigs, DENSE_BUDGET)
}

pub fn spectrum_with_budget(
    mat: &GeneratorMatrix,
    k_eigs: usize,
    budget: usize,
) -> Result<SpectrumReport, LinearError> {
    if mat.size > budget {
        return Err(LinearError::TooLarge {
            size: mat.size,
            budget,
        });
    }
    let a = mat.to_faer();
    let mut eigenvalues: Vec<Complex64> = match a.eigenvalues() {
        Ok(ev) => ev.into_iter().map(|z| Complex64::new(z.re, z.im)).collect(),
        Err(_) => {
            return Err(LinearError::EigenFailure {
                size: mat.size,
                dump: mat.dump(),
            })
        }
    };
    if eigenvalues.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinearError::EigenFailure {
            size: mat.size,
            dump: mat.dump(),
        });
    }
    eigenvalues.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    let zero_idx = (0..eigenvalues.len())
        .min_by(|&i, &j| eigenvalues[i].norm().total_cmp(&eigenvalues[j].norm()))
        .expect("matrix is nonempty");
    let zero = eigenvalues[zero_idx];
    let gap = eigenvalues
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != zero_idx)
        .map(|(_, z)| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let near_zero = eigenvalues
        .iter()
        .filter(|z| z.norm() < 5.0 * mat.grid.dx())
        .count();
    let kernel_vector = null_vector(&a, zero.re, mat.age_cells, mat.grid.dx());
    let kernel_match = mat
        .grid
        .l1_distance(&kernel_vector, &mat.reference)
        .unwrap_or(f64::NAN);
    if k_eigs > 0 {
        eigenvalues.truncate(k_eigs);
    }
    Ok(SpectrumReport {
        eigenvalues,
        zero,
        gap,
        near_zero,
        kernel_vector,
        kernel_match,
    })
}

/// Inverse iteration at a real shift next to `z0`; returns the age block
/// normalized to unit `L¹` mass.
fn null_vector(a: &Mat<f64>, z0: f64, age_cells: usize, dx: f64) -> Vec<f64> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(1.0, f64::max);
    let shift = z0 - 1e-10 * scale;
    let shifted = Mat::from_fn(n, n, |i, j| a[(i, j)] - if i == j { shift } else { 0.0 });
    let lu = shifted.partial_piv_lu();
    let mut x = Mat::from_fn(n, 1, |_, _| 1.0 / n as f64);
    for _ in 0..3 {
        let y = lu.solve(&x);
        let norm = (0..n).map(|i| y[(i, 0)].abs()).sum::<f64>();
        x = Mat::from_fn(n, 1, |i, _| y[(i, 0)] / norm);
    }
    let mut v: Vec<f64> = (0..age_cells).map(|i| x[(i, 0)]).collect();
    let mass: f64 = v.iter().sum::<f64>() * dx;
    for e in v.iter_mut() {
        *e /= mass;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delay_kernel::KernelKind;
    use crate::steady_state::{solve_m_with, SteadyOptions};
    use approx::assert_abs_diff_eq;

    fn steady(model: &FiringRateModel, grid: &AgeGrid) -> SteadyState {
        solve_m_with(model, grid, &SteadyOptions::for_grid(model, grid)).unwrap()
    }

    #[test]
    fn three_cell_constant_rate_matrix() {
        let grid = AgeGrid::with_cells(0.5, 3).unwrap();
        let model = FiringRateModel::constant(2.0).unwrap();
        let ss = steady(&model, &grid);
        let mat = build_generator(&model, &grid, &ss).unwrap();
        let r = 2.0;
        // last cell: 1/j with j = (1 - e^{-k dx})/k
        let r_last = 2.0 / (1.0 - (-1.0f64).exp());
        let expected = [
            [-2.0 - r + r, r, r_last],
            [2.0, -2.0 - r, 0.0],
            [0.0, 2.0, -r_last],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(mat.get(i, j), expected[i][j], epsilon = 1e-12);
            }
        }
        for s in mat.age_column_sums() {
            assert_abs_diff_eq!(s, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn generator_conserves_mass() {
        let grid = AgeGrid::new(0.05, 10.0).unwrap();
        let model = FiringRateModel::step(0.5, 0.25, 1.0, 0.5).unwrap();
        let ss = steady(&model, &grid);
        let mat = build_generator(&model, &grid, &ss).unwrap();
        let g: Vec<f64> = (0..grid.n_cells()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let lg = mat.apply(&g);
        let norm: f64 = g.iter().map(|v| v.abs()).sum::<f64>() * grid.dx();
        assert!(grid.integrate(&lg).unwrap().abs() <= 1e-10 * norm);
    }

    #[test]
    fn steady_state_is_nearly_stationary() {
        let model = FiringRateModel::step(0.5, 0.25, 1.0, 0.05).unwrap();
        let residual = |dx: f64| {
            let grid = AgeGrid::new(dx, 10.0).unwrap();
            let ss = steady(&model, &grid);
            let mat = build_generator(&model, &grid, &ss).unwrap();
            let lf = mat.apply(&ss.values);
            lf.iter().map(|v| v.abs()).sum::<f64>() * dx
        };
        let (coarse, fine) = (residual(0.02), residual(0.01));
        assert!(fine < coarse && fine < 0.1, "{coarse} {fine}");
    }

    /// Characteristic function of the constant-rate generator, by elimination
    /// of the subdiagonal: `h(z) = 0` exactly at the eigenvalues.
    fn characteristic(k: f64, dx: f64, n: usize, z: Complex64) -> Complex64 {
        let inv = 1.0 / dx;
        let r_last = k / (1.0 - (-k * dx).exp());
        let mut v = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 1..n {
            let r = if i + 1 == n { r_last } else { k };
            let diag = if i + 1 == n { r + z } else { inv + r + z };
            v = v * inv / diag;
            acc += r * v;
        }
        -(inv + z) + acc
    }

    #[test]
    fn constant_rate_spectrum_matches_characteristic_function() {
        let dx = 0.02;
        let k = 2.0;
        let grid = AgeGrid::new(dx, 10.0).unwrap();
        let model = FiringRateModel::constant(k).unwrap();
        let ss = steady(&model, &grid);
        let report = spectrum(&build_generator(&model, &grid, &ss).unwrap(), 0).unwrap();
        assert_eq!(report.near_zero, 1);
        assert!(report.zero.norm() < 1e-8);
        assert!(report.gap < -k / 2.0, "{}", report.gap);
        // eigenvalues are roots of h up to conditioning; check relative smallness
        // against the scale of h at a nearby non-root point
        for z in report.eigenvalues.iter().step_by(25) {
            let h = characteristic(k, dx, grid.n_cells(), *z);
            let probe = characteristic(k, dx, grid.n_cells(), *z + Complex64::new(0.3, 0.0));
            assert!(h.norm() < 1e-4 * probe.norm().max(1.0), "z={z} h={h}");
        }
        assert!(report.kernel_match < 10.0 * dx, "{}", report.kernel_match);
        assert!(report.kernel_vector.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn weak_step_rate_has_negative_gap() {
        let grid = AgeGrid::new(0.02, 10.0).unwrap();
        let model = FiringRateModel::step(0.5, 0.25, 1.0, 0.05).unwrap();
        let ss = steady(&model, &grid);
        let report = spectrum(&build_generator(&model, &grid, &ss).unwrap(), 10).unwrap();
        assert_eq!(report.eigenvalues.len(), 10);
        assert!(report.gap < 0.0);
        assert!(report.kernel_match < 10.0 * grid.dx());
    }

    #[test]
    fn delay_system_blocks() {
        let grid = AgeGrid::new(0.04, 10.0).unwrap();
        let model = FiringRateModel::step(0.5, 0.25, 1.0, 0.05).unwrap();
        let ss = steady(&model, &grid);
        let kernel = DelayKernel::new(KernelKind::Exponential { rate: 2.0 }, grid.dx(), 1.0).unwrap();
        let y_grid = AgeGrid::with_cells(grid.dx(), kernel.memory_len()).unwrap();
        let sys = build_delay_system(&model, &grid, &ss, &kernel, &y_grid).unwrap();
        let gen = build_generator(&model, &grid, &ss).unwrap();
        let n = grid.n_cells();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(sys.get(i, j), gen.get(i, j));
            }
            for j in n..sys.size() {
                assert_eq!(sys.get(i, j), 0.0);
            }
        }
        let mut state = vec![0.0; sys.size()];
        for v in state[n..].iter_mut() {
            *v = 0.7;
        }
        assert_abs_diff_eq!(sys.read_activity(&state).unwrap(), 0.7, epsilon = 1e-12);

        let report = spectrum(&sys, 0).unwrap();
        let block = spectrum(&gen, 0).unwrap();
        let a_prime = (-kernel.delta()).max(block.gap);
        assert!(report.gap <= a_prime + 0.05, "{} vs {}", report.gap, a_prime);
        assert!(report.kernel_match < 10.0 * grid.dx());
        assert!(matches!(
            build_delay_system(&model, &grid, &ss, &DelayKernel::dirac(), &y_grid),
            Err(LinearError::DiracKernel)
        ));
    }

    #[test]
    fn budget_is_enforced() {
        let grid = AgeGrid::new(0.1, 10.0).unwrap();
        let model = FiringRateModel::constant(1.0).unwrap();
        let ss = steady(&model, &grid);
        let mat = build_generator(&model, &grid, &ss).unwrap();
        assert!(matches!(spectrum_with_budget(&mat, 0, 50), Err(LinearError::TooLarge { .. })));
        let other = AgeGrid::new(0.05, 10.0).unwrap();
        assert!(build_generator(&model, &other, &ss).is_err());
    }
}
