//! Firing-rate families `k(x, λμ)` and their cumulative integrals.
//!
//! Every model is evaluated at an *effective* activity `λ·μ`; callers always
//! pass the raw network activity `μ` and the coupling is applied here.
//!
//! Three families are provided:
//!
//! * [`RateKind::Constant`]: `k ≡ k0`, independent of age and activity.
//! * [`RateKind::Step`]: the indicator `k = 1{x > σ(λμ)}` with a nonincreasing
//!   threshold map `σ` (see [`ThresholdMap`]). Evaluated exactly, never smoothed.
//! * [`RateKind::Smooth`]: `k = c(λμ)·(1 − e^{−x/ramp})` with a saturating
//!   ceiling `c(s) = k1 − (k1 − k0)e^{−gain·s}`.

use crate::grid::AgeGrid;
use thiserror::Error;

/// Gauss-Legendre nodes and weights on [-1, 1], five points.
const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
    0.236_926_885_056_189_08,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("age must be nonnegative, got {0}")]
    NegativeAge(f64),
    #[error("activity must be nonnegative, got {0}")]
    NegativeActivity(f64),
    #[error("invalid firing-rate parameter: {0}")]
    InvalidParameter(String),
    #[error("activity range must satisfy 0 <= lo < hi, got ({0}, {1})")]
    DegenerateRange(f64, f64),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
}

/// Nonincreasing threshold `σ: activity → age` of a step firing rate, with
/// `σ(0) = σ₊`, `σ(∞) = σ₋` and `σ₋ < σ₊ < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdMap {
    /// `σ(s) = σ₋ + (σ₊ − σ₋)e^{−decay·s}`. Lipschitz with constant `(σ₊ − σ₋)·decay`.
    Exponential {
        sigma_plus: f64,
        sigma_minus: f64,
        decay: f64,
    },
    /// Logistic switch around `center`, rescaled so that `σ(0) = σ₊` exactly.
    /// Large `steepness` makes the activity constraint lose uniqueness at
    /// intermediate coupling.
    Logistic {
        sigma_plus: f64,
        sigma_minus: f64,
        center: f64,
        steepness: f64,
    },
    /// `σ(s) = σ₋ + (σ₊ − σ₋)e^{−√(s/scale)}`: continuous but not Lipschitz at 0.
    RootExponential {
        sigma_plus: f64,
        sigma_minus: f64,
        scale: f64,
    },
}

impl ThresholdMap {
    pub fn sigma_plus(&self) -> f64 {
        match *self {
            Self::Exponential { sigma_plus, .. }
            | Self::Logistic { sigma_plus, .. }
            | Self::RootExponential { sigma_plus, .. } => sigma_plus,
        }
    }

    pub fn sigma_minus(&self) -> f64 {
        match *self {
            Self::Exponential { sigma_minus, .. }
            | Self::Logistic { sigma_minus, .. }
            | Self::RootExponential { sigma_minus, .. } => sigma_minus,
        }
    }

    /// Threshold age at effective activity `s = λμ`.
    pub fn eval(&self, s: f64) -> f64 {
        let (hi, lo) = (self.sigma_plus(), self.sigma_minus());
        match *self {
            Self::Exponential { decay, .. } => lo + (hi - lo) * (-decay * s).exp(),
            Self::Logistic {
                center, steepness, ..
            } => {
                let logistic = |u: f64| 1.0 / (1.0 + (steepness * (u - center)).exp());
                lo + (hi - lo) * logistic(s) / logistic(0.0)
            }
            Self::RootExponential { scale, .. } => lo + (hi - lo) * (-(s / scale).sqrt()).exp(),
        }
    }

    /// Global Lipschitz constant of `σ`, `None` when it has none.
    pub fn lipschitz(&self) -> Option<f64> {
        let spread = self.sigma_plus() - self.sigma_minus();
        match *self {
            Self::Exponential { decay, .. } => Some(spread * decay),
            Self::Logistic {
                center, steepness, ..
            } => {
                // |L'| peaks at the center with value steepness/4.
                let l0 = 1.0 / (1.0 + (-steepness * center).exp());
                Some(spread * steepness / 4.0 / l0)
            }
            Self::RootExponential { .. } => None,
        }
    }

    fn validate(&self) -> Result<(), RateError> {
        let (hi, lo) = (self.sigma_plus(), self.sigma_minus());
        if !(0.0 <= lo && lo < hi && hi < 1.0) {
            return Err(RateError::InvalidParameter(format!(
                "threshold ordering requires 0 <= sigma_minus < sigma_plus < 1, got sigma_minus={lo}, sigma_plus={hi}"
            )));
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(RateError::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        match *self {
            Self::Exponential { decay, .. } => positive("decay", decay),
            Self::Logistic {
                center, steepness, ..
            } => {
                positive("steepness", steepness)?;
                if center.is_finite() {
                    Ok(())
                } else {
                    Err(RateError::InvalidParameter("center must be finite".into()))
                }
            }
            Self::RootExponential { scale, .. } => positive("scale", scale),
        }
    }
}

/// `k(x, s) = c(s)(1 − e^{−x/ramp})`, `c(s) = k1 − (k1 − k0)e^{−gain·s}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothRate {
    pub k0: f64,
    pub k1: f64,
    pub ramp: f64,
    pub gain: f64,
}

impl SmoothRate {
    fn ceiling(&self, s: f64) -> f64 {
        self.k1 - (self.k1 - self.k0) * (-self.gain * s).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateKind {
    Constant { k0: f64 },
    Step(ThresholdMap),
    Smooth(SmoothRate),
}

/// A firing-rate family together with its connectivity `λ`.
///
/// Immutable after construction and `Sync`; evaluate from as many threads as needed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiringRateModel {
    kind: RateKind,
    lambda: f64,
}

/// The age profile `x ↦ k(x, λμ)` at one fixed activity.
///
/// All discretization work is done on frozen profiles: the activity enters
/// only through a handful of scalars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrozenRate {
    Constant { k: f64 },
    Step { sigma: f64 },
    Smooth { ceiling: f64, ramp: f64 },
}

/// Integrals of one age cell `[a, b)` under a frozen profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellProfile {
    /// `K(b) − K(a)`.
    pub dk: f64,
    /// `∫_a^b e^{−(K(x) − K(a))} dx`, in `(0, b − a]`.
    pub j: f64,
}

/// Sampled Lipschitz modulus of `μ ↦ k(·, λμ)` in `L¹` and the connectivity
/// thresholds derived from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeEstimate {
    /// `+∞` when the threshold map is not Lipschitz.
    pub xi: f64,
    /// Largest `λ` below which the sampled contraction factor stays under 1.
    pub lambda_weak: f64,
    /// Smallest `λ` above which the sampled contraction factor stays under 1.
    pub lambda_strong: f64,
}

impl RegimeEstimate {
    pub fn is_lipschitz(&self) -> bool {
        self.xi.is_finite()
    }

    pub fn in_weak_regime(&self, lambda: f64) -> bool {
        lambda < self.lambda_weak
    }

    pub fn in_strong_regime(&self, lambda: f64) -> bool {
        lambda > self.lambda_strong
    }
}

impl FiringRateModel {
    pub fn new(kind: RateKind, lambda: f64) -> Result<Self, RateError> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(RateError::InvalidParameter(format!(
                "lambda must be nonnegative, got {lambda}"
            )));
        }
        match kind {
            RateKind::Constant { k0 } => {
                if !(k0 > 0.0 && k0.is_finite()) {
                    return Err(RateError::InvalidParameter(format!(
                        "k0 must be positive, got {k0}"
                    )));
                }
            }
            RateKind::Step(map) => map.validate()?,
            RateKind::Smooth(s) => {
                if !(s.k0 > 0.0 && s.k0 <= s.k1 && s.k1.is_finite()) {
                    return Err(RateError::InvalidParameter(format!(
                        "smooth rate requires 0 < k0 <= k1 < inf, got k0={}, k1={}",
                        s.k0, s.k1
                    )));
                }
                if !(s.ramp > 0.0 && s.gain >= 0.0 && s.ramp.is_finite() && s.gain.is_finite()) {
                    return Err(RateError::InvalidParameter(format!(
                        "smooth rate requires ramp > 0 and gain >= 0, got ramp={}, gain={}",
                        s.ramp, s.gain
                    )));
                }
            }
        }
        Ok(Self { kind, lambda })
    }

    pub fn constant(k0: f64) -> Result<Self, RateError> {
        Self::new(RateKind::Constant { k0 }, 0.0)
    }

    /// Step rate with the exponential threshold map.
    pub fn step(sigma_plus: f64, sigma_minus: f64, decay: f64, lambda: f64) -> Result<Self, RateError> {
        Self::new(
            RateKind::Step(ThresholdMap::Exponential {
                sigma_plus,
                sigma_minus,
                decay,
            }),
            lambda,
        )
    }

    pub fn kind(&self) -> &RateKind {
        &self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Same family at another connectivity.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self, RateError> {
        Self::new(self.kind, lambda)
    }

    /// `lim_{x→∞} k(x, 0)`.
    pub fn k0(&self) -> f64 {
        match self.kind {
            RateKind::Constant { k0 } => k0,
            RateKind::Step(_) => 1.0,
            RateKind::Smooth(s) => s.k0,
        }
    }

    /// `lim_{x,μ→∞} k(x, μ)`, the global upper bound of the rate.
    pub fn k1(&self) -> f64 {
        match self.kind {
            RateKind::Constant { k0 } => k0,
            RateKind::Step(_) => 1.0,
            RateKind::Smooth(s) => s.k1,
        }
    }

    /// Smallest age `x₀` with `k(x, μ) ≥ k0/2` for every `x ≥ x₀` and every `μ ≥ 0`.
    pub fn half_rate_age(&self) -> f64 {
        match self.kind {
            RateKind::Constant { .. } => 0.0,
            RateKind::Step(map) => map.sigma_plus(),
            RateKind::Smooth(s) => s.ramp * std::f64::consts::LN_2,
        }
    }

    /// Profile of `x ↦ k(x, λμ)`; `mu` is the raw activity.
    pub fn freeze(&self, mu: f64) -> FrozenRate {
        let s = self.lambda * mu.max(0.0);
        match self.kind {
            RateKind::Constant { k0 } => FrozenRate::Constant { k: k0 },
            RateKind::Step(map) => FrozenRate::Step { sigma: map.eval(s) },
            RateKind::Smooth(sr) => FrozenRate::Smooth {
                ceiling: sr.ceiling(s),
                ramp: sr.ramp,
            },
        }
    }

    fn check_domain(x: f64, mu: f64) -> Result<(), RateError> {
        if !(x >= 0.0) {
            return Err(RateError::NegativeAge(x));
        }
        if !(mu >= 0.0) {
            return Err(RateError::NegativeActivity(mu));
        }
        Ok(())
    }

    /// `k(x, λμ)`.
    pub fn rate(&self, x: f64, mu: f64) -> Result<f64, RateError> {
        Self::check_domain(x, mu)?;
        Ok(self.freeze(mu).rate(x))
    }

    /// `K(x, λμ) = ∫_0^x k(y, λμ) dy`.
    pub fn cumulative(&self, x: f64, mu: f64) -> Result<f64, RateError> {
        Self::check_domain(x, mu)?;
        Ok(self.freeze(mu).cumulative(x))
    }

    /// `∫_0^horizon |k(x, λμ₂) − k(x, λμ₁)| dx`.
    ///
    /// The rate is nondecreasing in the activity, so the integrand never
    /// changes sign and the integral is a difference of cumulatives.
    pub fn l1_variation(&self, mu1: f64, mu2: f64, horizon: f64) -> f64 {
        (self.freeze(mu2).cumulative(horizon) - self.freeze(mu1).cumulative(horizon)).abs()
    }

    fn sampled_xi(&self, lo: f64, hi: f64, samples: usize, horizon: f64) -> f64 {
        let mus: Vec<f64> = (0..samples)
            .map(|i| lo + (hi - lo) * i as f64 / (samples - 1) as f64)
            .collect();
        let cums: Vec<f64> = mus.iter().map(|&m| self.freeze(m).cumulative(horizon)).collect();
        let mut xi: f64 = 0.0;
        for i in 0..samples {
            for j in i + 1..samples {
                xi = xi.max((cums[j] - cums[i]).abs() / (mus[j] - mus[i]));
            }
        }
        xi
    }

    fn is_lipschitz(&self) -> bool {
        match self.kind {
            RateKind::Step(map) => map.lipschitz().is_some(),
            _ => true,
        }
    }

    /// Sampled `ξ` over `mu_range` (integral truncated at `horizon`) and the
    /// weak/strong connectivity thresholds.
    ///
    /// A coupling is accepted when `2k₁·ξ(λ)·(density_sup + k₁) < 1`.
    /// The weak threshold samples `ξ` on `mu_range`, the strong one on
    /// `(μ∞, k₁)` with `μ∞` the larger of `mu_range.0` and the activity
    /// lower bound `(k₀/2)e^{−k₁x₀}`.
    pub fn estimate_xi(
        &self,
        mu_range: (f64, f64),
        samples: usize,
        horizon: f64,
        density_sup: f64,
    ) -> Result<RegimeEstimate, RateError> {
        let (lo, hi) = mu_range;
        if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
            return Err(RateError::DegenerateRange(lo, hi));
        }
        if samples < 2 {
            return Err(RateError::TooFewSamples(samples));
        }
        if !self.is_lipschitz() {
            return Ok(RegimeEstimate {
                xi: f64::INFINITY,
                lambda_weak: 0.0,
                lambda_strong: f64::INFINITY,
            });
        }
        let xi = self.sampled_xi(lo, hi, samples, horizon);
        let k1 = self.k1();
        let mu_inf = lo.max(0.5 * self.k0() * (-k1 * self.half_rate_age()).exp());
        let strong_range = (mu_inf.min(k1 * (1.0 - 1e-9)), k1);
        let factor = |lambda: f64, range: (f64, f64)| {
            let m = Self { lambda, ..*self };
            2.0 * k1 * m.sampled_xi(range.0, range.1, samples, horizon) * (density_sup + k1)
        };
        Ok(RegimeEstimate {
            xi,
            lambda_weak: threshold_scan(|l| factor(l, (lo, hi)) < 1.0, true),
            lambda_strong: threshold_scan(|l| factor(l, strong_range) < 1.0, false),
        })
    }
}

/// Locate the edge of the `ok` region on a logarithmic λ scan of [1e-6, 1e6].
///
/// With `from_below`, returns the first crossing from ok to not-ok (∞ if none);
/// otherwise the last crossing from not-ok to ok (0 if always ok, ∞ if not ok at the top).
fn threshold_scan(ok: impl Fn(f64) -> bool, from_below: bool) -> f64 {
    const PER_DECADE: usize = 8;
    let grid: Vec<f64> = (0..=12 * PER_DECADE)
        .map(|i| 10f64.powf(-6.0 + i as f64 / PER_DECADE as f64))
        .collect();
    let flags: Vec<bool> = grid.iter().map(|&l| ok(l)).collect();
    let refine = |mut good: f64, mut bad: f64| {
        for _ in 0..50 {
            let mid = (good * bad).sqrt();
            if ok(mid) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        0.5 * (good + bad)
    };
    if from_below {
        if !flags[0] {
            return 0.0;
        }
        match flags.iter().position(|f| !f) {
            Some(i) => refine(grid[i - 1], grid[i]),
            None => f64::INFINITY,
        }
    } else {
        if !flags[flags.len() - 1] {
            return f64::INFINITY;
        }
        match flags.iter().rposition(|f| !f) {
            Some(i) => refine(grid[i + 1], grid[i]),
            None => 0.0,
        }
    }
}

impl FrozenRate {
    pub fn rate(&self, x: f64) -> f64 {
        match *self {
            Self::Constant { k } => k,
            Self::Step { sigma } => {
                if x > sigma {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Smooth { ceiling, ramp } => -ceiling * (-x / ramp).exp_m1(),
        }
    }

    pub fn cumulative(&self, x: f64) -> f64 {
        match *self {
            Self::Constant { k } => k * x,
            Self::Step { sigma } => (x - sigma).max(0.0),
            Self::Smooth { ceiling, ramp } => ceiling * (x + ramp * (-x / ramp).exp_m1()),
        }
    }

    /// Integrals of the cell `[a, b)`.
    pub fn profile(&self, a: f64, b: f64) -> CellProfile {
        self.profile_width(a, b - a)
    }

    /// Profile of cell `i` of `grid`, with the exact cell width `dx`.
    pub fn cell(&self, grid: &AgeGrid, i: usize) -> CellProfile {
        self.profile_width(grid.edge(i), grid.dx())
    }

    fn profile_width(&self, a: f64, h: f64) -> CellProfile {
        let b = a + h;
        match *self {
            Self::Constant { k } => CellProfile {
                dk: k * h,
                j: -(-k * h).exp_m1() / k,
            },
            Self::Step { sigma } => {
                if b <= sigma {
                    CellProfile { dk: 0.0, j: h }
                } else if a >= sigma {
                    CellProfile {
                        dk: h,
                        j: -(-h).exp_m1(),
                    }
                } else {
                    CellProfile {
                        dk: b - sigma,
                        j: (sigma - a) - (-(b - sigma)).exp_m1(),
                    }
                }
            }
            Self::Smooth { ceiling, ramp } => {
                let ka = self.cumulative(a);
                // Panels narrow enough that e^{-K} varies by at most a factor e on each.
                let panels = ((h * (ceiling + 1.0 / ramp)).ceil() as usize).max(1);
                let j = self.gauss_legendre(a, b, panels, |x| (-(self.cumulative(x) - ka)).exp());
                CellProfile {
                    dk: self.cumulative(b) - ka,
                    j,
                }
            }
        }
    }

    /// `∫_a^∞ e^{−(K(x) − K(a))} dx`.
    pub fn tail(&self, a: f64) -> f64 {
        match *self {
            Self::Constant { k } => 1.0 / k,
            Self::Step { sigma } => (sigma - a).max(0.0) + 1.0,
            Self::Smooth { ceiling, ramp } => {
                let ka = self.cumulative(a);
                // k is increasing in x, so e^{-(K-K(a))} <= e^{-k(a)(x-a)} and [a, a+L] carries
                // all but e^{-40} of the integral.
                let floor = self.rate(a).max(ceiling * 1e-3);
                let len = 40.0 / floor;
                let panels = ((len * (ceiling + 1.0 / ramp)).ceil() as usize).clamp(1, 1 << 20);
                self.gauss_legendre(a, a + len, panels, |x| (-(self.cumulative(x) - ka)).exp())
            }
        }
    }

    fn gauss_legendre(&self, a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
        let h = (b - a) / panels as f64;
        let mut acc = 0.0;
        for p in 0..panels {
            let c = a + (p as f64 + 0.5) * h;
            for (node, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
                acc += w * f(c + 0.5 * h * node);
            }
        }
        0.5 * h * acc
    }
}
