//! Run configuration: TOML parsing and validation.
//!
//! Parsing rejects unknown keys; validation then checks every field and
//! reports all problems at once.

use elapsed_core::{
    AgeGrid, DelayKernel, FiringRateModel, Horizon, InitialDatum, KernelKind, RateKind, SmoothRate,
    ThresholdMap,
};
use serde::Deserialize;
use std::fmt;
use std::path::{Path, PathBuf};

pub const DEFAULTS: &str = r#"# Moment exponent of the reported L1_q norm.
q = 1.0

[grid]
dx = 1e-3
x_max = 10.0

[model]
# constant | step | smooth
kind = "step"
lambda = 0.05
# step: threshold = exponential | logistic | root-exponential
threshold = "exponential"
sigma_plus = 0.5
sigma_minus = 0.25
decay = 1.0
# logistic: center, steepness; root-exponential: scale
# constant: k0; smooth: k0, k1, ramp, gain

[kernel]
# dirac | exponential | gamma | sampled
kind = "dirac"
# exponential/gamma: rate (and shape); sampled: file with rows "y,b"
delta = 1.0

[initial]
# uniform01 | exp2 | spike, or file = "values.csv" (one value per line)
preset = "uniform01"
spike_at = 0.0

[run]
t_end = 30.0
record_every = 10
fixed_point_tol = 1e-12
fixed_point_max_iter = 200
allow_degenerate = false

[steady]
# truncated | half-line
horizon = "truncated"
tol = 1e-12

[spectrum]
dx = 5e-3
# number of leading eigenvalues written; 0 writes all
eigs = 0

[sweep]
lambdas = [0.0, 0.05]
spectrum_dx = 5e-3
fit_window = [5.0, 30.0]
xi_samples = 32
"#;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    q: Option<f64>,
    grid: Option<RawGrid>,
    model: Option<RawModel>,
    kernel: Option<RawKernel>,
    initial: Option<RawInitial>,
    run: Option<RawRun>,
    steady: Option<RawSteady>,
    spectrum: Option<RawSpectrum>,
    sweep: Option<RawSweep>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    dx: Option<f64>,
    x_max: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: Option<String>,
    lambda: Option<f64>,
    k0: Option<f64>,
    k1: Option<f64>,
    ramp: Option<f64>,
    gain: Option<f64>,
    threshold: Option<String>,
    sigma_plus: Option<f64>,
    sigma_minus: Option<f64>,
    decay: Option<f64>,
    center: Option<f64>,
    steepness: Option<f64>,
    scale: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    kind: Option<String>,
    rate: Option<f64>,
    shape: Option<f64>,
    file: Option<PathBuf>,
    delta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    preset: Option<String>,
    file: Option<PathBuf>,
    spike_at: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    t_end: Option<f64>,
    record_every: Option<i64>,
    fixed_point_tol: Option<f64>,
    fixed_point_max_iter: Option<i64>,
    allow_degenerate: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSteady {
    horizon: Option<String>,
    tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpectrum {
    dx: Option<f64>,
    eigs: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    lambdas: Option<Vec<f64>>,
    spectrum_dx: Option<f64>,
    fit_window: Option<Vec<f64>>,
    xi_samples: Option<i64>,
}

/// Every problem found in a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} problem(s)):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Debug, Clone)]
pub struct RunSettings {
    pub t_end: f64,
    pub record_every: usize,
    pub fixed_point_tol: f64,
    pub fixed_point_max_iter: usize,
    pub allow_degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct SweepBlock {
    pub lambdas: Vec<f64>,
    pub spectrum_grid: AgeGrid,
    pub fit_window: (f64, f64),
    pub xi_samples: usize,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub q: f64,
    pub grid: AgeGrid,
    pub model: FiringRateModel,
    pub kernel: DelayKernel,
    pub initial: InitialDatum,
    pub run: RunSettings,
    pub horizon: Horizon,
    pub steady_tol: f64,
    pub spectrum_grid: AgeGrid,
    pub eigs: usize,
    pub sweep: SweepBlock,
}

struct Collector {
    errors: Vec<String>,
}

impl Collector {
    fn push(&mut self, msg: impl Into<String>) {
        self.errors.push(msg.into());
    }

    fn positive(&mut self, key: &str, v: f64) -> f64 {
        if !(v > 0.0 && v.is_finite()) {
            self.push(format!("{key} must be positive and finite, got {v}"));
        }
        v
    }

    fn count(&mut self, key: &str, v: i64, min: i64) -> usize {
        if v < min {
            self.push(format!("{key} must be at least {min}, got {v}"));
            return min.max(0) as usize;
        }
        v as usize
    }

    fn required(&mut self, key: &str, v: Option<f64>) -> f64 {
        match v {
            Some(v) => v,
            None => {
                self.push(format!("{key} is required"));
                f64::NAN
            }
        }
    }

    fn grid(&mut self, key: &str, dx: f64, x_max: f64) -> Option<AgeGrid> {
        if !(dx > 0.0 && dx.is_finite()) {
            self.push(format!("{key}.dx must be positive and finite, got {dx}"));
            return None;
        }
        match AgeGrid::new(dx, x_max) {
            Ok(g) => Some(g),
            Err(e) => {
                self.push(format!("{key}.x_max: {e}"));
                None
            }
        }
    }
}

/// Reads and validates `path`. File references inside the config are
/// resolved relative to the config's directory.
pub fn parse_config(path: &Path) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Ok(parse_str(&text, base)?)
}

pub fn parse_str(text: &str, base: &Path) -> Result<RunConfig, ConfigErrors> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigErrors(vec![e.message().to_string()]))?;
    validate(raw, base)
}

fn validate(raw: RawConfig, base: &Path) -> Result<RunConfig, ConfigErrors> {
    let mut c = Collector { errors: Vec::new() };
    let q = raw.q.unwrap_or(1.0);
    c.positive("q", q);

    let g = raw.grid.unwrap_or_default();
    let grid = c.grid("grid", g.dx.unwrap_or(1e-3), g.x_max.unwrap_or(10.0));

    let model = model_from(raw.model.unwrap_or_default(), &mut c);

    let dt = grid.map_or(1e-3, |g| g.dx());
    let kernel = kernel_from(raw.kernel.unwrap_or_default(), dt, base, &mut c);

    let initial = initial_from(raw.initial.unwrap_or_default(), base, &mut c);

    let r = raw.run.unwrap_or_default();
    let run = RunSettings {
        t_end: c.positive("run.t_end", r.t_end.unwrap_or(30.0)),
        record_every: c.count("run.record_every", r.record_every.unwrap_or(10), 1),
        fixed_point_tol: c.positive("run.fixed_point_tol", r.fixed_point_tol.unwrap_or(1e-12)),
        fixed_point_max_iter: c.count("run.fixed_point_max_iter", r.fixed_point_max_iter.unwrap_or(200), 1),
        allow_degenerate: r.allow_degenerate.unwrap_or(false),
    };

    let s = raw.steady.unwrap_or_default();
    let horizon = match s.horizon.as_deref().unwrap_or("truncated") {
        "truncated" => Horizon::Truncated,
        "half-line" => Horizon::HalfLine,
        other => {
            c.push(format!("steady.horizon must be \"truncated\" or \"half-line\", got \"{other}\""));
            Horizon::Truncated
        }
    };
    let steady_tol = c.positive("steady.tol", s.tol.unwrap_or(1e-12));

    let x_max = grid.map_or(10.0, |g| g.x_max());
    let sp = raw.spectrum.unwrap_or_default();
    let spectrum_grid = c.grid("spectrum", sp.dx.unwrap_or(5e-3), x_max);
    let eigs = c.count("spectrum.eigs", sp.eigs.unwrap_or(0), 0);

    let sw = raw.sweep.unwrap_or_default();
    let lambdas = sw.lambdas.unwrap_or_else(|| vec![0.0, 0.05]);
    if lambdas.is_empty() {
        c.push("sweep.lambdas must not be empty");
    }
    if lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        c.push("sweep.lambdas must be nonnegative and finite");
    }
    let sweep_spectrum = c.grid("sweep.spectrum_dx", sw.spectrum_dx.unwrap_or(5e-3), x_max);
    let window = sw.fit_window.unwrap_or_else(|| vec![5.0, 30.0]);
    let fit_window = if window.len() == 2 && window[0] >= 0.0 && window[1] > window[0] {
        (window[0], window[1])
    } else {
        c.push(format!("sweep.fit_window must be [start, end] with 0 <= start < end, got {window:?}"));
        (0.0, 1.0)
    };
    let xi_samples = c.count("sweep.xi_samples", sw.xi_samples.unwrap_or(32), 2);

    match (grid, model, kernel, initial, spectrum_grid, sweep_spectrum) {
        (Some(grid), Some(model), Some(kernel), Some(initial), Some(spectrum_grid), Some(sweep_grid))
            if c.errors.is_empty() =>
        {
            Ok(RunConfig {
                q,
                grid,
                model,
                kernel,
                initial,
                run,
                horizon,
                steady_tol,
                spectrum_grid,
                eigs,
                sweep: SweepBlock {
                    lambdas,
                    spectrum_grid: sweep_grid,
                    fit_window,
                    xi_samples,
                },
            })
        }
        _ => Err(ConfigErrors(c.errors)),
    }
}

fn model_from(m: RawModel, c: &mut Collector) -> Option<FiringRateModel> {
    let before = c.errors.len();
    let lambda = m.lambda.unwrap_or(0.0);
    if !(lambda >= 0.0 && lambda.is_finite()) {
        c.push(format!("model.lambda must be nonnegative, got {lambda}"));
    }
    let kind = match m.kind.as_deref().unwrap_or("step") {
        "constant" => {
            let k0 = c.positive("model.k0", m.k0.unwrap_or(2.0));
            RateKind::Constant { k0 }
        }
        "smooth" => {
            let k0 = c.positive("model.k0", m.k0.unwrap_or(1.0));
            let k1 = c.positive("model.k1", m.k1.unwrap_or(2.0));
            if k1 < k0 {
                c.push(format!("model.k1 must be >= model.k0, got k0={k0}, k1={k1}"));
            }
            let ramp = c.positive("model.ramp", m.ramp.unwrap_or(0.3));
            let gain = m.gain.unwrap_or(1.0);
            if !(gain >= 0.0 && gain.is_finite()) {
                c.push(format!("model.gain must be nonnegative, got {gain}"));
            }
            RateKind::Smooth(SmoothRate { k0, k1, ramp, gain })
        }
        "step" => {
            let sigma_plus = m.sigma_plus.unwrap_or(0.5);
            let sigma_minus = m.sigma_minus.unwrap_or(0.25);
            if !(0.0 <= sigma_minus && sigma_minus < sigma_plus && sigma_plus < 1.0) {
                c.push(format!(
                    "model.sigma_minus must be < model.sigma_plus < 1 (threshold ordering, with 0 <= sigma_minus), got sigma_minus={sigma_minus}, sigma_plus={sigma_plus}"
                ));
            }
            let map = match m.threshold.as_deref().unwrap_or("exponential") {
                "exponential" => ThresholdMap::Exponential {
                    sigma_plus,
                    sigma_minus,
                    decay: c.positive("model.decay", m.decay.unwrap_or(1.0)),
                },
                "logistic" => {
                    let center = c.required("model.center", m.center);
                    let steepness = c.required("model.steepness", m.steepness);
                    if steepness.is_finite() {
                        c.positive("model.steepness", steepness);
                    }
                    ThresholdMap::Logistic {
                        sigma_plus,
                        sigma_minus,
                        center,
                        steepness,
                    }
                }
                "root-exponential" => ThresholdMap::RootExponential {
                    sigma_plus,
                    sigma_minus,
                    scale: c.positive("model.scale", m.scale.unwrap_or(1.0)),
                },
                other => {
                    c.push(format!(
                        "model.threshold must be exponential, logistic or root-exponential, got \"{other}\""
                    ));
                    return None;
                }
            };
            RateKind::Step(map)
        }
        other => {
            c.push(format!("model.kind must be constant, step or smooth, got \"{other}\""));
            return None;
        }
    };
    if c.errors.len() > before {
        return None;
    }
    match FiringRateModel::new(kind, lambda) {
        Ok(model) => Some(model),
        Err(e) => {
            c.push(format!("model: {e}"));
            None
        }
    }
}

fn kernel_from(k: RawKernel, dt: f64, base: &Path, c: &mut Collector) -> Option<DelayKernel> {
    let delta = k.delta.unwrap_or(1.0);
    let kind = match k.kind.as_deref().unwrap_or("dirac") {
        "dirac" => return Some(DelayKernel::dirac()),
        "exponential" => KernelKind::Exponential {
            rate: c.positive("kernel.rate", k.rate.unwrap_or(2.0)),
        },
        "gamma" => KernelKind::Gamma {
            shape: c.positive("kernel.shape", k.shape.unwrap_or(2.0)),
            rate: c.positive("kernel.rate", k.rate.unwrap_or(2.0)),
        },
        "sampled" => {
            let Some(file) = k.file else {
                c.push("kernel.file is required for a sampled kernel");
                return None;
            };
            match read_pairs(&base.join(&file)) {
                Ok((y, b)) => KernelKind::Sampled { y, b },
                Err(e) => {
                    c.push(format!("kernel.file: {e}"));
                    return None;
                }
            }
        }
        other => {
            c.push(format!(
                "kernel.kind must be dirac, exponential, gamma or sampled, got \"{other}\""
            ));
            return None;
        }
    };
    match DelayKernel::new(kind, dt, delta) {
        Ok(kernel) => Some(kernel),
        Err(e) => {
            c.push(format!("kernel: {e}"));
            None
        }
    }
}

fn initial_from(i: RawInitial, base: &Path, c: &mut Collector) -> Option<InitialDatum> {
    if let Some(file) = i.file {
        if i.preset.is_some() {
            c.push("initial.preset and initial.file are mutually exclusive");
            return None;
        }
        return match read_column(&base.join(&file)) {
            Ok(v) => Some(InitialDatum::Sampled(v)),
            Err(e) => {
                c.push(format!("initial.file: {e}"));
                None
            }
        };
    }
    match i.preset.as_deref().unwrap_or("uniform01") {
        "uniform01" => Some(InitialDatum::uniform01()),
        "exp2" => Some(InitialDatum::exp2()),
        "spike" => {
            let at = i.spike_at.unwrap_or(0.0);
            if !(at >= 0.0 && at.is_finite()) {
                c.push(format!("initial.spike_at must be nonnegative, got {at}"));
                return None;
            }
            Some(InitialDatum::Spike { at })
        }
        other => {
            c.push(format!("initial.preset must be uniform01, exp2 or spike, got \"{other}\""));
            None
        }
    }
}

fn csv_reader(path: &Path) -> anyhow::Result<csv::Reader<std::fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?)
}

fn parse_field(path: &Path, line: usize, s: &str) -> anyhow::Result<f64> {
    s.parse::<f64>()
        .map_err(|_| anyhow::anyhow!("{}:{line}: not a number: \"{s}\"", path.display()))
}

/// One value per line.
pub fn read_column(path: &Path) -> anyhow::Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, rec) in csv_reader(path)?.records().enumerate() {
        let rec = rec?;
        let Some(field) = rec.get(0).filter(|f| !f.is_empty()) else {
            continue;
        };
        out.push(parse_field(path, i + 1, field)?);
    }
    Ok(out)
}

/// Rows `y, b`.
pub fn read_pairs(path: &Path) -> anyhow::Result<(Vec<f64>, Vec<f64>)> {
    let (mut ys, mut bs) = (Vec::new(), Vec::new());
    for (i, rec) in csv_reader(path)?.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            anyhow::bail!("{}:{}: expected two columns", path.display(), i + 1);
        }
        ys.push(parse_field(path, i + 1, &rec[0])?);
        bs.push(parse_field(path, i + 1, &rec[1])?);
    }
    Ok((ys, bs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigErrors> {
        parse_str(text, Path::new("."))
    }

    #[test]
    fn defaults_parse() {
        let cfg = parse(DEFAULTS).unwrap();
        assert_eq!(cfg.grid.n_cells(), 10_000);
        assert_eq!(cfg.model.lambda(), 0.05);
        assert!(cfg.kernel.is_dirac());
    }

    #[test]
    fn minimal_constant_config() {
        let cfg = parse("[model]\nkind = \"constant\"\nk0 = 2.0\n").unwrap();
        assert_eq!(cfg.model.k1(), 2.0);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse("[grid]\ndx = 0.01\nxmax = 3\n").unwrap_err();
        assert!(err.to_string().contains("xmax"), "{err}");
    }

    #[test]
    fn all_errors_are_collected() {
        let err = parse("[grid]\ndx = -1.0\n[model]\nkind = \"step\"\nsigma_plus = 0.2\nsigma_minus = 0.4\n[run]\nt_end = 0\n")
            .unwrap_err();
        let text = err.to_string();
        assert!(text.contains("grid.dx"), "{text}");
        assert!(text.contains("model.sigma_minus must be < model.sigma_plus"), "{text}");
        assert!(text.contains("run.t_end"), "{text}");
        assert_eq!(err.0.len(), 3, "{text}");
    }

    #[test]
    fn logistic_requires_center() {
        let err = parse("[model]\nthreshold = \"logistic\"\nsteepness = 10.0\n").unwrap_err();
        assert!(err.to_string().contains("model.center"));
    }

    #[test]
    fn exponential_kernel_moment_is_checked() {
        let err = parse("[kernel]\nkind = \"exponential\"\nrate = 1.0\ndelta = 2.0\n").unwrap_err();
        assert!(err.to_string().contains("kernel"));
        let ok = parse("[grid]\ndx = 0.01\n[kernel]\nkind = \"exponential\"\nrate = 2.0\ndelta = 1.0\n").unwrap();
        assert!(!ok.kernel.is_dirac());
    }
}
