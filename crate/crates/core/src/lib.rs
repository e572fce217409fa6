//! Simulation and analysis of the time-elapsed neuron network model
//!
//! ```text
//! ∂_t f + ∂_x f + k(x, λm) f = 0,   f(t, 0) = p(t),   p = ∫ k(x, λm) f dx
//! ```
//!
//! where `f(t, x)` is the density of neurons whose last discharge happened
//! `x` time units ago and `m` is the network activity, equal to `p` without
//! delay or to `∫ p(t − y) b(dy)` with a delay kernel `b`.
//!
//! The crate is organized bottom-up: [`firing_rate`] and [`grid`] define the
//! model and the mesh, [`kinetics`] the per-cell firing, [`steady_state`],
//! [`activity`] and [`evolution`] the stationary and dynamic problems,
//! [`linear_analysis`] the spectrum of the linearized generator and
//! [`sweep`] / [`acceptance`] the batch drivers.

pub mod acceptance;
pub mod activity;
pub mod delay_kernel;
pub mod evolution;
pub mod exec;
pub mod firing_rate;
pub mod grid;
pub mod kinetics;
pub mod linear_analysis;
pub mod steady_state;
pub mod sweep;

pub use activity::{solve_activity_implicit, ActivityError, ActivityOptions, ActivitySolution};
pub use delay_kernel::{DelayError, DelayKernel, DischargeHistory, KernelKind};
pub use evolution::{
    decay_fit, kappa0, run, step, DecayFit, EvolutionError, SimulationConfig, SimulationTrace,
};
pub use exec::Execution;
pub use firing_rate::{FiringRateModel, RateError, RateKind, RegimeEstimate, SmoothRate, ThresholdMap};
pub use grid::{AgeGrid, DensityState, GridError, InitialDatum};
pub use linear_analysis::{build_delay_system, build_generator, spectrum, GeneratorMatrix, SpectrumReport};
pub use steady_state::{regime_scan, solve_m, solve_m_with, Horizon, SteadyOptions, SteadyState};
