//! Delay kernels `b` and their convolution against the discharge history.
//!
//! A kernel is discretized once, on the simulation time mesh `y_j = j·Δt`, as
//! trapezoid weights renormalized to unit sum. The activity at time `t` is
//! `m = Σ_j w_j·p(t − y_j)`.

use statrs::distribution::{Continuous, ContinuousCDF, Gamma};
use std::collections::VecDeque;
use thiserror::Error;

/// Mass of the kernel left beyond the memory horizon.
const TAIL_MASS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DelayError {
    #[error("invalid delay kernel: {0}")]
    InvalidKernel(String),
    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("exponential moment of order {delta} is infinite for this kernel")]
    MomentDiverges { delta: f64 },
    #[error("history holds {got} values but the kernel needs {needed}")]
    HistoryTooShort { needed: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelKind {
    /// `b = δ₀`: no delay.
    Dirac,
    /// `b(y) = θe^{−θy}`.
    Exponential { rate: f64 },
    /// Gamma density with `shape ≥ 1` (bounded at the origin).
    Gamma { shape: f64, rate: f64 },
    /// Density given at ascending nodes `y` (starting at 0), linearly interpolated.
    Sampled { y: Vec<f64>, b: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayKernel {
    kind: KernelKind,
    dt: f64,
    weights: Vec<f64>,
    delta: f64,
    delta_moment: f64,
}

impl DelayKernel {
    pub fn dirac() -> Self {
        Self {
            kind: KernelKind::Dirac,
            dt: 1.0,
            weights: vec![1.0],
            delta: 0.0,
            delta_moment: 1.0,
        }
    }

    /// Discretizes `kind` on the mesh of width `dt`; `delta` is the order of
    /// the reported exponential moment `Σ w_j e^{δ y_j}`.
    pub fn new(kind: KernelKind, dt: f64, delta: f64) -> Result<Self, DelayError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(DelayError::InvalidStep(dt));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(DelayError::InvalidKernel(format!(
                "delta must be nonnegative, got {delta}"
            )));
        }
        let (density, horizon): (Box<dyn Fn(f64) -> f64>, f64) = match &kind {
            KernelKind::Dirac => {
                return Ok(Self {
                    dt,
                    ..Self::dirac()
                })
            }
            KernelKind::Exponential { rate } => {
                let rate = *rate;
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(DelayError::InvalidKernel(format!(
                        "exponential rate must be positive, got {rate}"
                    )));
                }
                if delta >= rate {
                    return Err(DelayError::MomentDiverges { delta });
                }
                (
                    Box::new(move |y: f64| rate * (-rate * y).exp()),
                    -TAIL_MASS.ln() / (rate - delta),
                )
            }
            KernelKind::Gamma { shape, rate } => {
                let (shape, rate) = (*shape, *rate);
                if !(shape >= 1.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
                    return Err(DelayError::InvalidKernel(format!(
                        "gamma kernel needs shape >= 1 and rate > 0, got shape={shape}, rate={rate}"
                    )));
                }
                if delta >= rate {
                    return Err(DelayError::MomentDiverges { delta });
                }
                let dist = Gamma::new(shape, rate)
                    .map_err(|e| DelayError::InvalidKernel(e.to_string()))?;
                let tilted = Gamma::new(shape, rate - delta)
                    .map_err(|e| DelayError::InvalidKernel(e.to_string()))?;
                let horizon = tilted.inverse_cdf(1.0 - TAIL_MASS);
                (Box::new(move |y: f64| dist.pdf(y)), horizon)
            }
            KernelKind::Sampled { y, b } => {
                validate_samples(y, b)?;
                let (y, b) = (y.clone(), b.clone());
                let horizon = *y.last().unwrap();
                (Box::new(move |t: f64| interpolate(&y, &b, t)), horizon)
            }
        };
        let last = (horizon / dt).ceil().max(1.0) as usize;
        let mut weights: Vec<f64> = (0..=last)
            .map(|j| {
                let end = j == 0 || j == last;
                density(j as f64 * dt) * dt * if end { 0.5 } else { 1.0 }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(DelayError::InvalidKernel(
                "kernel has no mass on the time mesh".into(),
            ));
        }
        for w in weights.iter_mut() {
            *w /= total;
        }
        let delta_moment = weights
            .iter()
            .enumerate()
            .map(|(j, w)| w * (delta * j as f64 * dt).exp())
            .sum();
        Ok(Self {
            kind,
            dt,
            weights,
            delta,
            delta_moment,
        })
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn is_dirac(&self) -> bool {
        matches!(self.kind, KernelKind::Dirac)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Renormalized weights `w_0, …, w_J`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of history values the kernel reads, including the current one.
    pub fn memory_len(&self) -> usize {
        self.weights.len()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn delta_moment(&self) -> f64 {
        self.delta_moment
    }

    /// `m = Σ_j w_j·p(t − j·Δt)`, where `history.get(0)` is the current discharge.
    pub fn convolve(&self, history: &DischargeHistory) -> Result<f64, DelayError> {
        self.check(history, 0)?;
        Ok(self
            .weights
            .iter()
            .enumerate()
            .map(|(j, w)| w * history.get(j))
            .sum())
    }

    /// `Σ_{j≥1} w_j·p(t − j·Δt)` when `history.get(0)` is the previous step's
    /// discharge: the part of the activity already fixed by the past.
    pub fn lagged_part(&self, history: &DischargeHistory) -> Result<f64, DelayError> {
        self.check(history, 1)?;
        Ok(self
            .weights
            .iter()
            .enumerate()
            .skip(1)
            .map(|(j, w)| w * history.get(j - 1))
            .sum())
    }

    fn check(&self, history: &DischargeHistory, offset: usize) -> Result<(), DelayError> {
        let needed = self.weights.len() - offset;
        if history.len() < needed {
            Err(DelayError::HistoryTooShort {
                needed,
                got: history.len(),
            })
        } else {
            Ok(())
        }
    }
}

fn validate_samples(y: &[f64], b: &[f64]) -> Result<(), DelayError> {
    if y.len() != b.len() || y.len() < 2 {
        return Err(DelayError::InvalidKernel(format!(
            "sampled kernel needs matching y and b with at least 2 nodes, got {} and {}",
            y.len(),
            b.len()
        )));
    }
    if y[0] != 0.0 || y.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(DelayError::InvalidKernel(
            "sampled kernel nodes must start at 0 and increase strictly".into(),
        ));
    }
    if b.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(DelayError::InvalidKernel(
            "sampled kernel values must be nonnegative and finite".into(),
        ));
    }
    let mass: f64 = y
        .windows(2)
        .zip(b.windows(2))
        .map(|(yy, bb)| 0.5 * (bb[0] + bb[1]) * (yy[1] - yy[0]))
        .sum();
    if (mass - 1.0).abs() > 1e-8 {
        return Err(DelayError::InvalidKernel(format!(
            "sampled kernel must have unit mass (trapezoid rule), got {mass}"
        )));
    }
    Ok(())
}

fn interpolate(y: &[f64], b: &[f64], t: f64) -> f64 {
    if t <= y[0] {
        return b[0];
    }
    if t >= y[y.len() - 1] {
        return if t == y[y.len() - 1] { b[b.len() - 1] } else { 0.0 };
    }
    let i = y.partition_point(|v| *v <= t) - 1;
    let s = (t - y[i]) / (y[i + 1] - y[i]);
    b[i] + s * (b[i + 1] - b[i])
}

/// Ring buffer of past discharges, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct DischargeHistory {
    buf: VecDeque<f64>,
    capacity: usize,
}

impl DischargeHistory {
    /// Buffer of `capacity` values, all set to `fill`.
    pub fn filled(capacity: usize, fill: f64) -> Self {
        let capacity = capacity.max(1);
        Self {
            buf: std::iter::repeat(fill).take(capacity).collect(),
            capacity,
        }
    }

    /// Builds a buffer from values listed newest first.
    pub fn from_newest_first(values: &[f64]) -> Self {
        Self {
            buf: values.iter().copied().collect(),
            capacity: values.len().max(1),
        }
    }

    pub fn push(&mut self, p: f64) {
        if self.buf.len() == self.capacity {
            self.buf.pop_back();
        }
        self.buf.push_front(p);
    }

    /// Value `j` steps back from the newest.
    pub fn get(&self, j: usize) -> f64 {
        self.buf[j]
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dirac_returns_current_value() {
        let k = DelayKernel::dirac();
        let h = DischargeHistory::from_newest_first(&[0.7, 0.1, 0.2]);
        assert_eq!(k.convolve(&h).unwrap(), 0.7);
    }

    #[test]
    fn constant_history_is_reproduced() {
        let k = DelayKernel::new(KernelKind::Exponential { rate: 2.0 }, 1e-3, 1.0).unwrap();
        let h = DischargeHistory::filled(k.memory_len(), 0.37);
        let direct: f64 = k.weights().iter().map(|w| w * 0.37).sum();
        assert_abs_diff_eq!(k.convolve(&h).unwrap(), direct, epsilon = 1e-15);
        assert_abs_diff_eq!(k.convolve(&h).unwrap(), 0.37, epsilon = 1e-6);
    }

    #[test]
    fn exponential_history_closed_form() {
        let theta = 2.0;
        let dt = 1e-3;
        let k = DelayKernel::new(KernelKind::Exponential { rate: theta }, dt, 1.0).unwrap();
        let t = 0.5;
        let values: Vec<f64> = (0..k.memory_len()).map(|j| (t - j as f64 * dt).exp()).collect();
        let h = DischargeHistory::from_newest_first(&values);
        assert_abs_diff_eq!(k.convolve(&h).unwrap(), t.exp() * theta / (theta + 1.0), epsilon = 1e-5);
    }

    #[test]
    fn exponential_moment_matches_closed_form() {
        let theta: f64 = 2.0;
        for delta in [0.5, 1.0, 1.5] {
            let k = DelayKernel::new(KernelKind::Exponential { rate: theta }, 0.01 / theta, delta).unwrap();
            let exact = theta / (theta - delta);
            assert!((k.delta_moment() - exact).abs() < 0.01 * exact);
        }
        assert!(matches!(
            DelayKernel::new(KernelKind::Exponential { rate: 2.0 }, 1e-3, 2.0),
            Err(DelayError::MomentDiverges { .. })
        ));
    }

    #[test]
    fn gamma_kernel_mean_delay() {
        let k = DelayKernel::new(KernelKind::Gamma { shape: 3.0, rate: 4.0 }, 1e-3, 1.0).unwrap();
        let mean: f64 = k.weights().iter().enumerate().map(|(j, w)| w * j as f64 * 1e-3).sum();
        assert_abs_diff_eq!(mean, 0.75, epsilon = 1e-4);
        assert!(DelayKernel::new(KernelKind::Gamma { shape: 0.5, rate: 4.0 }, 1e-3, 1.0).is_err());
    }

    #[test]
    fn sampled_kernel_uniform_on_unit_interval() {
        let y = vec![0.0, 1.0];
        let b = vec![1.0, 1.0];
        let k = DelayKernel::new(KernelKind::Sampled { y, b }, 0.01, 1.0).unwrap();
        assert_eq!(k.memory_len(), 101);
        assert_abs_diff_eq!(k.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k.delta_moment(), 1f64.exp() - 1.0, epsilon = 1e-4);
        let bad = KernelKind::Sampled {
            y: vec![0.0, 1.0],
            b: vec![1.0, 2.0],
        };
        assert!(DelayKernel::new(bad, 0.01, 1.0).is_err());
    }

    #[test]
    fn short_history_is_an_error() {
        let k = DelayKernel::new(KernelKind::Exponential { rate: 2.0 }, 1e-2, 1.0).unwrap();
        let h = DischargeHistory::filled(3, 1.0);
        assert!(matches!(k.convolve(&h), Err(DelayError::HistoryTooShort { .. })));
    }

    #[test]
    fn lagged_part_plus_current_is_convolution() {
        let k = DelayKernel::new(KernelKind::Exponential { rate: 5.0 }, 1e-2, 1.0).unwrap();
        let past: Vec<f64> = (0..k.memory_len()).map(|j| 1.0 + 0.1 * (j as f64).sin()).collect();
        let mut h = DischargeHistory::from_newest_first(&past);
        let lagged = k.lagged_part(&h).unwrap();
        h.push(0.9);
        let full = k.convolve(&h).unwrap();
        assert_abs_diff_eq!(full, k.weights()[0] * 0.9 + lagged, epsilon = 1e-15);
    }

    #[test]
    fn ring_buffer_drops_oldest() {
        let mut h = DischargeHistory::filled(3, 0.0);
        for p in [1.0, 2.0, 3.0, 4.0] {
            h.push(p);
        }
        assert_eq!(h.len(), 3);
        assert_eq!((h.get(0), h.get(1), h.get(2)), (4.0, 3.0, 2.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn convolution_is_monotone(
                base in proptest::collection::vec(0.0f64..2.0, 400),
                bump in proptest::collection::vec(0.0f64..1.0, 400),
                rate in 1.0f64..20.0,
            ) {
                let k = DelayKernel::new(KernelKind::Exponential { rate }, 0.05, 0.5).unwrap();
                prop_assume!(k.memory_len() <= 400);
                let lo = DischargeHistory::from_newest_first(&base);
                let raised: Vec<f64> = base.iter().zip(&bump).map(|(a, b)| a + b).collect();
                let hi = DischargeHistory::from_newest_first(&raised);
                prop_assert!(k.convolve(&hi).unwrap() >= k.convolve(&lo).unwrap());
            }

            #[test]
            fn constant_history_is_exact(c in 0.0f64..5.0, rate in 0.5f64..10.0) {
                let k = DelayKernel::new(KernelKind::Exponential { rate }, 0.01, 0.1).unwrap();
                let h = DischargeHistory::filled(k.memory_len(), c);
                prop_assert!((k.convolve(&h).unwrap() - c).abs() <= 1e-13 * (1.0 + c));
            }
        }
    }
}
