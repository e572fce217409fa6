use crate::config::{parse_config, RunConfig};
use crate::output::{num, opt, read_columns, write_csv};
use anyhow::{bail, Context};
use elapsed_core::acceptance::{CriterionOutcome, Suite};
use elapsed_core::sweep::{sweep as run_sweep, SweepSettings};
use elapsed_core::{
    build_delay_system, build_generator, decay_fit as fit, run, solve_m_with, spectrum as dense_spectrum, AgeGrid,
    DelayKernel, DensityState, Execution, SimulationConfig, SteadyOptions, SteadyState,
};
use std::path::Path;

fn steady_on(cfg: &RunConfig, grid: &AgeGrid) -> anyhow::Result<SteadyState> {
    let opts = SteadyOptions {
        tol: cfg.steady_tol,
        horizon: cfg.horizon,
        ..SteadyOptions::for_grid(&cfg.model, grid)
    };
    solve_m_with(&cfg.model, grid, &opts).context("steady state")
}

fn initial_state(cfg: &RunConfig) -> anyhow::Result<DensityState> {
    let projection = cfg.initial.project(&cfg.grid).context("initial datum")?;
    if projection.tail_mass > 1e-12 {
        log::warn!("initial datum has mass {:.3e} beyond x_max; it was dropped", projection.tail_mass);
    }
    Ok(projection.state)
}

pub fn simulate(config: &Path, out: Option<&Path>) -> anyhow::Result<u8> {
    let cfg = parse_config(config)?;
    let f0 = initial_state(&cfg)?;
    let steady = match steady_on(&cfg, &cfg.grid) {
        Ok(s) => Some(s),
        Err(e) => {
            log::warn!("{e:#}; distance to the stationary state is not recorded");
            None
        }
    };
    let mut sim = SimulationConfig::new(cfg.grid, cfg.model, cfg.run.t_end).with_kernel(cfg.kernel.clone());
    sim.record_every = cfg.run.record_every;
    sim.fixed_point_tol = cfg.run.fixed_point_tol;
    sim.fixed_point_max_iter = cfg.run.fixed_point_max_iter;
    sim.q = cfg.q;
    sim.allow_degenerate = cfg.run.allow_degenerate;
    let trace = run(&sim, &f0, steady.as_ref())?;

    if let Some(path) = out {
        let dist = trace.l1_dist_to_f.as_ref();
        let rows = (0..trace.times.len()).map(|k| {
            vec![
                num(trace.times[k]),
                num(trace.m_series[k]),
                num(trace.p_series[k]),
                num(trace.exit_series[k]),
                num(trace.mass_series[k]),
                opt(dist.map(|d| d[k])),
                num(trace.linf_norm[k]),
                num(trace.l1q_norm[k]),
            ]
        });
        write_csv(path, &["t", "m", "p", "exit", "mass", "l1_dist", "linf", "l1q"], rows)?;
    }
    let last = trace.times.len() - 1;
    println!("kappa0 = {}", num(trace.kappa0));
    if let Some(s) = &steady {
        println!("steady M = {}", num(s.m));
    }
    println!("t = {}  m = {}  mass = {}", num(trace.times[last]), num(trace.m_series[last]), num(trace.mass_series[last]));
    if let Some(d) = &trace.l1_dist_to_f {
        println!("final L1 distance = {}", num(d[last]));
    }
    if trace.bisection_fallbacks > 0 {
        println!("bisection fallbacks = {}", trace.bisection_fallbacks);
    }
    Ok(0)
}

pub fn steady_state(config: &Path, out: Option<&Path>) -> anyhow::Result<u8> {
    let cfg = parse_config(config)?;
    let s = steady_on(&cfg, &cfg.grid)?;
    println!("M = {}", num(s.m));
    println!("normalization residual = {}", num(s.normalization_residual));
    println!("ode residual = {}", num(s.residual_ode));
    println!("activity residual = {}", num(s.residual_activity));
    let roots: Vec<String> = s.roots.iter().map(|r| num(*r)).collect();
    println!("roots = [{}]", roots.join(", "));
    println!("unique = {}", s.is_unique());
    if let Some(path) = out {
        let rows = s
            .grid
            .midpoints()
            .zip(&s.values)
            .map(|(x, f)| vec![num(x), num(*f)]);
        write_csv(path, &["x", "f"], rows)?;
    }
    Ok(0)
}

pub fn spectrum(config: &Path, eigs_out: Option<&Path>, kernel_out: Option<&Path>) -> anyhow::Result<u8> {
    let cfg = parse_config(config)?;
    let grid = cfg.spectrum_grid;
    let s = steady_on(&cfg, &grid)?;
    let mat = if cfg.kernel.is_dirac() {
        build_generator(&cfg.model, &grid, &s)?
    } else {
        let kernel = DelayKernel::new(cfg.kernel.kind().clone(), grid.dx(), cfg.kernel.delta())?;
        let y_grid = AgeGrid::with_cells(grid.dx(), kernel.memory_len())?;
        build_delay_system(&cfg.model, &grid, &s, &kernel, &y_grid)?
    };
    let report = dense_spectrum(&mat, cfg.eigs)?;
    println!("size = {}", mat.size());
    println!("zero eigenvalue = {} {:+.11e}i", num(report.zero.re), report.zero.im);
    println!("gap = {}", num(report.gap));
    println!("eigenvalues near zero = {}", report.near_zero);
    println!("kernel vector L1 distance to F = {}", num(report.kernel_match));
    if let Some(path) = eigs_out {
        let rows = report
            .eigenvalues
            .iter()
            .map(|z| vec![num(z.re), num(z.im)]);
        write_csv(path, &["re", "im"], rows)?;
    }
    if let Some(path) = kernel_out {
        let rows = grid
            .midpoints()
            .zip(report.kernel_vector.iter().zip(&s.values))
            .map(|(x, (v, f))| vec![num(x), num(*v), num(*f)]);
        write_csv(path, &["x", "kernel", "f"], rows)?;
    }
    Ok(0)
}

pub fn sweep(config: &Path, out: Option<&Path>, exec: Execution) -> anyhow::Result<u8> {
    let cfg = parse_config(config)?;
    let f0 = initial_state(&cfg)?;
    if !cfg.kernel.is_dirac() {
        log::warn!("sweep ignores the delay kernel");
    }
    let settings = SweepSettings {
        grid: cfg.grid,
        spectrum_grid: cfg.sweep.spectrum_grid,
        t_end: cfg.run.t_end,
        record_every: cfg.run.record_every,
        fit_window: cfg.sweep.fit_window,
        xi_samples: cfg.sweep.xi_samples,
        fixed_point_tol: cfg.run.fixed_point_tol,
        fixed_point_max_iter: cfg.run.fixed_point_max_iter,
    };
    let rows = run_sweep(&cfg.model, &cfg.sweep.lambdas, &f0, &settings, exec);
    println!("{:>12} {:>10} {:>14} {:>14} {:>14} {:>14} {:>8}", "lambda", "status", "M", "gap", "alpha", "xi", "unique");
    for r in &rows {
        let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6e}"));
        println!(
            "{:>12} {:>10} {:>14} {:>14} {:>14} {:>14} {:>8}",
            format!("{:.6e}", r.lambda),
            r.status.label(),
            show(r.m),
            show(r.gap),
            show(r.alpha),
            show(r.xi),
            r.unique.map_or("-".to_string(), |u| u.to_string())
        );
        if let elapsed_core::sweep::RowStatus::Failed(msg) = &r.status {
            log::warn!("lambda={}: {msg}", r.lambda);
        }
    }
    if let Some(path) = out {
        let csv_rows = rows.iter().map(|r| {
            vec![
                num(r.lambda),
                r.status.label().to_string(),
                opt(r.m),
                opt(r.xi),
                opt(r.gap),
                opt(r.alpha),
                opt(r.r2),
                r.unique.map(|u| u.to_string()).unwrap_or_default(),
            ]
        });
        write_csv(path, &["lambda", "status", "m", "xi", "gap", "alpha", "r2", "unique"], csv_rows)?;
    }
    Ok(0)
}

pub fn decay_fit(trace: &Path, window: (f64, f64)) -> anyhow::Result<u8> {
    if !(window.0 >= 0.0 && window.1 > window.0) {
        bail!("fit window must satisfy 0 <= from < to, got [{}, {}]", window.0, window.1);
    }
    let cols = read_columns(trace, &["t", "l1_dist"])?;
    let (times, dist): (Vec<f64>, Vec<f64>) = cols[0]
        .iter()
        .zip(&cols[1])
        .filter(|(t, d)| t.is_finite() && d.is_finite())
        .map(|(t, d)| (*t, *d))
        .unzip();
    let f = fit(&times, &dist, window)?;
    println!("alpha = {}", num(f.alpha));
    println!("C = {}", num(f.c));
    println!("r2 = {}", num(f.r2));
    println!("window = [{}, {}]{}", num(f.window.0), num(f.window.1), if f.shrunk { " (shrunk)" } else { "" });
    Ok(0)
}

pub fn accept(only: &[u8], exec: Execution) -> anyhow::Result<u8> {
    let suite = Suite::new(exec);
    let criteria: Vec<(u8, fn(&Suite) -> CriterionOutcome)> = vec![
        (1, Suite::mass_conservation),
        (2, Suite::steady_closed_forms),
        (3, Suite::uniform_bounds),
        (4, Suite::linear_gap),
        (5, Suite::nonlinear_relaxation),
        (6, Suite::delay_agreement),
        (7, Suite::grid_convergence),
        (8, Suite::implicit_activity),
    ];
    if let Some(bad) = only.iter().find(|id| !criteria.iter().any(|(c, _)| c == *id)) {
        bail!("unknown criterion {bad}; expected 1-8");
    }
    let mut failed = 0;
    for (id, check) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let outcome = check(&suite);
        println!("{outcome}");
        if !outcome.passed {
            failed += 1;
        }
    }
    Ok(if failed == 0 { 0 } else { 1 })
}
