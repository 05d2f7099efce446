//! Model parameterization, the Gaussian-CDF sigmoid and its Gaussian moment
//! closure, and the closed-form variance/covariance of the mean-field law.
//!
//! Every population `α` carries a time constant `τ`, a sigmoid gain `g` and
//! threshold `γ`, a noise intensity `λ`, an external input `I` and the
//! asymptotic fraction `δ` of neurons it holds. The firing rate of a neuron
//! with potential `x` is `S(x) = Φ(g·x + γ)` where `Φ` is the standard-normal
//! cumulative distribution. For `U ~ N(μ, v)` the expectation `E[S(U)]` has
//! the closed form
//!
//! ```text
//! f(μ, v) = Φ((g·μ + γ) / √(1 + g²·v))
//! ```
//!
//! which is what makes the mean-field moment equations closed.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Standard-normal cumulative distribution function.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard-normal density.
#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Firing-rate sigmoid `Φ(g·x + γ)`, valued in `[0, 1]`.
pub fn sigmoid(x: f64, g: f64, gamma: f64) -> Result<f64> {
    if !x.is_finite() || !gamma.is_finite() {
        return domain(format!("sigmoid needs finite input, got x = {x}, gamma = {gamma}"));
    }
    if !(g > 0.0 && g.is_finite()) {
        return domain(format!("sigmoid gain must be positive, got {g}"));
    }
    Ok(std_normal_cdf(g * x + gamma))
}

/// Scale factor `1/√(1 + g²v)` applied to the sigmoid argument by a Gaussian spread `v`.
#[inline]
fn spread_factor(v: f64, g: f64) -> f64 {
    1.0 / (1.0 + g * g * v).sqrt()
}

fn check_closure_args(mu: f64, v: f64, g: f64, gamma: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return domain(format!("variance must be finite and non-negative, got {v}"));
    }
    if !mu.is_finite() || !gamma.is_finite() {
        return domain(format!("closure needs finite mean and threshold, got mu = {mu}, gamma = {gamma}"));
    }
    if !(g > 0.0 && g.is_finite()) {
        return domain(format!("sigmoid gain must be positive, got {g}"));
    }
    Ok(())
}

/// `E[S(U)]` for `U ~ N(mu, v)`.
pub fn closure_f(mu: f64, v: f64, g: f64, gamma: f64) -> Result<f64> {
    check_closure_args(mu, v, g, gamma)?;
    Ok(std_normal_cdf((g * mu + gamma) * spread_factor(v, g)))
}

/// Derivative of [`closure_f`] with respect to the mean.
pub fn closure_f_dmu(mu: f64, v: f64, g: f64, gamma: f64) -> Result<f64> {
    check_closure_args(mu, v, g, gamma)?;
    let s = spread_factor(v, g);
    Ok(g * s * std_normal_pdf((g * mu + gamma) * s))
}

/// A piecewise-constant function of time. Serialized either as a bare number
/// or as a list of `[t_start, value]` pairs; the first piece starts at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Constant(f64),
    Piecewise(Vec<[f64; 2]>),
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::Constant(0.0)
    }
}

impl From<f64> for Schedule {
    fn from(v: f64) -> Self {
        Schedule::Constant(v)
    }
}

impl Schedule {
    pub fn validate(&self, what: &str) -> Result<()> {
        match self {
            Schedule::Constant(v) if v.is_finite() => Ok(()),
            Schedule::Constant(v) => Err(Error::InvalidModel(format!("{what} is not finite: {v}"))),
            Schedule::Piecewise(pieces) => {
                let first = pieces.first().ok_or_else(|| Error::InvalidModel(format!("{what} schedule is empty")))?;
                if first[0] != 0.0 {
                    return Err(Error::InvalidModel(format!("{what} schedule must start at t = 0")));
                }
                for w in pieces.windows(2) {
                    if !(w[1][0] > w[0][0]) {
                        return Err(Error::InvalidModel(format!("{what} schedule start times must increase strictly")));
                    }
                }
                if pieces.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
                    return Err(Error::InvalidModel(format!("{what} schedule has non-finite entries")));
                }
                Ok(())
            }
        }
    }

    #[inline]
    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::Piecewise(pieces) => {
                let idx = pieces.partition_point(|p| p[0] <= t);
                pieces[idx.saturating_sub(1)][1]
            }
        }
    }

    /// Value held after the last change.
    pub fn final_value(&self) -> f64 {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::Piecewise(pieces) => pieces.last().map(|p| p[1]).unwrap_or(0.0),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Schedule::Constant(_) => true,
            Schedule::Piecewise(p) => p.windows(2).all(|w| w[0][1] == w[1][1]),
        }
    }

    /// Times in `(0, ∞)` at which the value jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Schedule::Constant(_) => Vec::new(),
            Schedule::Piecewise(p) => p.iter().skip(1).map(|q| q[0]).collect(),
        }
    }

    /// Constant pieces `(start, end, value)` covering `[0, upto]`.
    fn pieces_until(&self, upto: f64) -> Vec<(f64, f64, f64)> {
        match self {
            Schedule::Constant(v) => vec![(0.0, upto, *v)],
            Schedule::Piecewise(p) => {
                let mut out = Vec::new();
                for (k, piece) in p.iter().enumerate() {
                    let start = piece[0];
                    if start >= upto {
                        break;
                    }
                    let end = p.get(k + 1).map_or(upto, |n| n[0].min(upto));
                    out.push((start, end, piece[1]));
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationParams {
    pub tau: f64,
    pub gain: f64,
    pub threshold: f64,
    pub noise: Schedule,
    pub input: Schedule,
    pub fraction: f64,
}

impl PopulationParams {
    /// Firing rate `S(x)` without argument checks, for inner loops.
    #[inline]
    pub fn rate(&self, x: f64) -> f64 {
        std_normal_cdf(self.gain * x + self.threshold)
    }

    /// Unchecked [`closure_f`] for this population.
    #[inline]
    pub fn mean_rate(&self, mu: f64, v: f64) -> f64 {
        std_normal_cdf((self.gain * mu + self.threshold) * spread_factor(v, self.gain))
    }

    /// Unchecked [`closure_f_dmu`] for this population.
    #[inline]
    pub fn mean_rate_slope(&self, mu: f64, v: f64) -> f64 {
        let s = spread_factor(v, self.gain);
        self.gain * s * std_normal_pdf((self.gain * mu + self.threshold) * s)
    }

    /// `τλ²/2` for the noise level held after the last schedule change.
    pub fn stationary_variance(&self) -> f64 {
        let lam = self.noise.final_value();
        self.tau * lam * lam / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub populations: Vec<PopulationParams>,
    pub connectivity: Vec<Vec<f64>>,
    #[serde(default)]
    pub label: String,
}

impl ModelSpec {
    pub fn n_populations(&self) -> usize {
        self.populations.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.populations.len();
        if p == 0 {
            return Err(Error::InvalidModel("at least one population is required".into()));
        }
        for (a, pop) in self.populations.iter().enumerate() {
            if !(pop.tau > 0.0 && pop.tau.is_finite()) {
                return Err(Error::InvalidModel(format!("population {a}: tau must be positive")));
            }
            if !(pop.gain > 0.0 && pop.gain.is_finite()) {
                return Err(Error::InvalidModel(format!("population {a}: gain must be positive")));
            }
            if !pop.threshold.is_finite() {
                return Err(Error::InvalidModel(format!("population {a}: threshold is not finite")));
            }
            pop.noise.validate(&format!("population {a} noise"))?;
            pop.input.validate(&format!("population {a} input"))?;
            let neg_noise = match &pop.noise {
                Schedule::Constant(v) => *v < 0.0,
                Schedule::Piecewise(pcs) => pcs.iter().any(|q| q[1] < 0.0),
            };
            if neg_noise {
                return Err(Error::InvalidModel(format!("population {a}: noise must be non-negative")));
            }
            let frac_ok = if p == 1 { pop.fraction == 1.0 } else { pop.fraction > 0.0 && pop.fraction < 1.0 };
            if !frac_ok {
                return Err(Error::InvalidModel(format!("population {a}: fraction {} outside (0, 1)", pop.fraction)));
            }
        }
        let total: f64 = self.populations.iter().map(|q| q.fraction).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!("fractions sum to {total}, expected 1")));
        }
        if self.connectivity.len() != p || self.connectivity.iter().any(|row| row.len() != p) {
            return Err(Error::InvalidModel(format!("connectivity must be {p}x{p}")));
        }
        if self.connectivity.iter().flatten().any(|w| !w.is_finite()) {
            return Err(Error::InvalidModel("connectivity has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Sorted, de-duplicated schedule breakpoints over all populations.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .populations
            .iter()
            .flat_map(|p| p.noise.breakpoints().into_iter().chain(p.input.breakpoints()))
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// One population with `τ = 1`, `γ = 0` and `I = −J/2`, so that `μ = 0`
    /// is an equilibrium of the mean-field equation for every gain and noise.
    pub fn one_population(coupling: f64, gain: f64, noise: f64) -> Self {
        ModelSpec {
            populations: vec![PopulationParams {
                tau: 1.0,
                gain,
                threshold: 0.0,
                noise: noise.into(),
                input: (-coupling / 2.0).into(),
                fraction: 1.0,
            }],
            connectivity: vec![vec![coupling]],
            label: "one-population pitchfork".into(),
        }
    }

    /// Symmetric excitatory/inhibitory pair with weights `J·[[1, −1], [1, 1]]`
    /// and inputs `(0, −J)`; the origin is an equilibrium for every gain.
    pub fn hopf_pair(coupling: f64, gain: f64, noise: f64) -> Self {
        let pop = |input: f64| PopulationParams {
            tau: 1.0,
            gain,
            threshold: 0.0,
            noise: noise.into(),
            input: input.into(),
            fraction: 0.5,
        };
        ModelSpec {
            populations: vec![pop(0.0), pop(-coupling)],
            connectivity: vec![vec![coupling, -coupling], vec![coupling, coupling]],
            label: "two-population hopf".into(),
        }
    }

    /// Excitatory/inhibitory network with weights `j·[[15, −12], [16, −5]]`,
    /// unit gain and time constant, zero threshold and equal halves.
    pub fn excitatory_inhibitory(coupling: f64, noise: f64, input_e: f64, input_i: f64) -> Self {
        let pop = |input: f64| PopulationParams {
            tau: 1.0,
            gain: 1.0,
            threshold: 0.0,
            noise: noise.into(),
            input: input.into(),
            fraction: 0.5,
        };
        ModelSpec {
            populations: vec![pop(input_e), pop(input_i)],
            connectivity: vec![vec![15.0 * coupling, -12.0 * coupling], vec![16.0 * coupling, -5.0 * coupling]],
            label: "excitatory-inhibitory".into(),
        }
    }
}

/// A scalar model parameter addressed by name in sweeps and continuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parameter {
    /// Sigmoid gain of every population.
    Gain,
    /// Sigmoid threshold of every population.
    Threshold,
    /// Constant noise intensity of every population.
    Noise,
    /// Time constant of every population.
    Tau,
    /// Constant input of one population (zero-based).
    Input(usize),
    /// Multiplier applied to the whole connectivity matrix.
    Coupling,
}

impl Parameter {
    /// Copy of `base` with this parameter set to `value`.
    pub fn apply(&self, base: &ModelSpec, value: f64) -> ModelSpec {
        let mut spec = base.clone();
        match *self {
            Parameter::Gain => spec.populations.iter_mut().for_each(|p| p.gain = value),
            Parameter::Threshold => spec.populations.iter_mut().for_each(|p| p.threshold = value),
            Parameter::Noise => spec.populations.iter_mut().for_each(|p| p.noise = value.into()),
            Parameter::Tau => spec.populations.iter_mut().for_each(|p| p.tau = value),
            Parameter::Input(a) => {
                if let Some(p) = spec.populations.get_mut(a) {
                    p.input = value.into();
                }
            }
            Parameter::Coupling => spec.connectivity.iter_mut().flatten().for_each(|w| *w *= value),
        }
        spec
    }
}

impl FromStr for Parameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let p = match s {
            "g" | "gain" => Parameter::Gain,
            "gamma" | "threshold" => Parameter::Threshold,
            "lambda" | "noise" => Parameter::Noise,
            "tau" => Parameter::Tau,
            "j" | "coupling" => Parameter::Coupling,
            _ => {
                let idx = s
                    .strip_prefix('I')
                    .or_else(|| s.strip_prefix("input"))
                    .and_then(|d| d.parse::<usize>().ok())
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown parameter name '{s}'")))?;
                Parameter::Input(idx - 1)
            }
        };
        Ok(p)
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Parameter::Gain => write!(f, "g"),
            Parameter::Threshold => write!(f, "gamma"),
            Parameter::Noise => write!(f, "lambda"),
            Parameter::Tau => write!(f, "tau"),
            Parameter::Input(a) => write!(f, "I{}", a + 1),
            Parameter::Coupling => write!(f, "j"),
        }
    }
}

/// Mean and variance of the Gaussian mean-field law at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentState {
    pub time: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl MomentState {
    pub fn new(time: f64, mean: Vec<f64>, variance: Vec<f64>) -> Self {
        MomentState { time, mean, variance }
    }

    /// State with the given means and every variance at its stationary value.
    pub fn stationary(spec: &ModelSpec, mean: Vec<f64>) -> Self {
        MomentState { time: 0.0, mean, variance: stationary_variance(spec) }
    }
}

/// `τ_α λ_α² / 2` for each population.
pub fn stationary_variance(spec: &ModelSpec) -> Vec<f64> {
    spec.populations.iter().map(PopulationParams::stationary_variance).collect()
}

/// `e^{−(t1+t2)/τ} [c0 + ∫₀^{t1∧t2} e^{2s/τ} λ(s)² ds]`, evaluated with every
/// exponent non-positive so long horizons do not overflow.
fn auto_covariance(tau: f64, noise: &Schedule, c0: f64, t1: f64, t2: f64) -> f64 {
    let shift = t1 + t2;
    let upto = t1.min(t2);
    let mut acc = c0 * (-shift / tau).exp();
    for (a, b, lam) in noise.pieces_until(upto) {
        acc += lam * lam * tau / 2.0 * ((2.0 * b - shift) / tau).exp()
            - lam * lam * tau / 2.0 * ((2.0 * a - shift) / tau).exp();
    }
    acc
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return domain(format!("time must be finite and non-negative, got {t}"));
    }
    Ok(())
}

/// Variance at time `t` for constant noise: `τλ²/2 + e^{−2t/τ}(v0 − τλ²/2)`.
pub fn variance_trajectory(v0: f64, tau: f64, lambda: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    if !(tau > 0.0) {
        return domain(format!("tau must be positive, got {tau}"));
    }
    if !(v0 >= 0.0) {
        return domain(format!("initial variance must be non-negative, got {v0}"));
    }
    Ok(auto_covariance(tau, &Schedule::Constant(lambda), v0, t, t))
}

/// Variance of population `alpha` at time `t`, following its noise schedule.
pub fn variance_at(spec: &ModelSpec, alpha: usize, v0: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    let pop = population(spec, alpha)?;
    Ok(auto_covariance(pop.tau, &pop.noise, v0, t, t))
}

fn population(spec: &ModelSpec, alpha: usize) -> Result<&PopulationParams> {
    spec.populations.get(alpha).ok_or_else(|| Error::Domain(format!("population index {alpha} out of range")))
}

/// Two-time covariance `Cov(V̄_α(t1), V̄_β(t2))` of the mean-field solution.
///
/// The driving Brownian motions of distinct populations are independent, so
/// off-diagonal entries only carry the decayed initial covariance.
pub fn covariance(spec: &ModelSpec, alpha: usize, beta: usize, t1: f64, t2: f64, v0_cov: &[Vec<f64>]) -> Result<f64> {
    check_time(t1)?;
    check_time(t2)?;
    let pa = population(spec, alpha)?;
    let pb = population(spec, beta)?;
    let c0 = v0_cov
        .get(alpha)
        .and_then(|row| row.get(beta))
        .copied()
        .ok_or_else(|| Error::Domain("initial covariance matrix has the wrong shape".into()))?;
    if alpha == beta {
        Ok(auto_covariance(pa.tau, &pa.noise, c0, t1, t2))
    } else {
        Ok((-(t1 / pa.tau + t2 / pb.tau)).exp() * c0)
    }
}

/// Critical gain `√(2π)/J` of the noiseless one-population network.
pub fn deterministic_critical_gain(coupling: f64) -> f64 {
    (2.0 * PI).sqrt() / coupling
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigmoid_midpoint_and_limits() {
        assert_eq!(sigmoid(0.0, 3.0, 0.0).unwrap(), 0.5);
        assert!(sigmoid(40.0, 1.0, 0.0).unwrap() == 1.0);
        assert!(sigmoid(-40.0, 1.0, 0.0).unwrap() < 1e-300);
        assert!(sigmoid(f64::NAN, 1.0, 0.0).is_err());
        assert!(sigmoid(f64::INFINITY, 1.0, 0.0).is_err());
    }

    #[test]
    fn closure_edge_cases() {
        for v in [0.0, 0.3, 10.0] {
            assert_eq!(closure_f(0.0, v, 2.0, 0.0).unwrap(), 0.5);
        }
        assert_eq!(closure_f(0.7, 0.0, 1.3, -0.2).unwrap(), sigmoid(0.7, 1.3, -0.2).unwrap());
        assert!(closure_f(0.0, -1e-9, 1.0, 0.0).is_err());
        assert!(closure_f_dmu(0.0, -1.0, 1.0, 0.0).is_err());
        assert_relative_eq!(closure_f_dmu(0.0, 0.0, 1.0, 0.0).unwrap(), 1.0 / (2.0 * PI).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn stationary_variance_values() {
        let mut spec = ModelSpec::one_population(1.0, 1.0, 0.0);
        assert_eq!(stationary_variance(&spec), vec![0.0]);
        spec.populations[0].noise = 1.0.into();
        assert_eq!(stationary_variance(&spec), vec![0.5]);
        spec.populations[0].noise = 3.0.into();
        spec.populations[0].tau = 2.0;
        assert_eq!(stationary_variance(&spec), vec![9.0]);
    }

    #[test]
    fn variance_fixed_point_and_limit() {
        let v_star = 2.0 * 0.7 * 0.7 / 2.0;
        for t in [0.0, 0.5, 3.0, 100.0] {
            assert_relative_eq!(variance_trajectory(v_star, 2.0, 0.7, t).unwrap(), v_star, epsilon = 1e-15);
        }
        assert_relative_eq!(variance_trajectory(0.0, 1.0, 1.0, 500.0).unwrap(), 0.5, epsilon = 1e-15);
        assert!(variance_trajectory(0.0, 1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn schedule_lookup() {
        let s = Schedule::Piecewise(vec![[0.0, 1.0], [2.0, 3.0], [5.0, 0.5]]);
        s.validate("noise").unwrap();
        assert_eq!(s.value_at(0.0), 1.0);
        assert_eq!(s.value_at(1.999), 1.0);
        assert_eq!(s.value_at(2.0), 3.0);
        assert_eq!(s.value_at(7.0), 0.5);
        assert_eq!(s.final_value(), 0.5);
        assert_eq!(s.breakpoints(), vec![2.0, 5.0]);
        assert!(Schedule::Piecewise(vec![[1.0, 1.0]]).validate("x").is_err());
        assert!(Schedule::Piecewise(vec![[0.0, 1.0], [0.0, 2.0]]).validate("x").is_err());
    }

    #[test]
    fn scheduled_variance_matches_segmentwise_closed_form() {
        let mut spec = ModelSpec::one_population(1.0, 1.0, 0.0);
        spec.populations[0].noise = Schedule::Piecewise(vec![[0.0, 1.0], [1.0, 2.0]]);
        let v1 = variance_trajectory(0.2, 1.0, 1.0, 1.0).unwrap();
        let expected = variance_trajectory(v1, 1.0, 2.0, 0.5).unwrap();
        assert_relative_eq!(variance_at(&spec, 0, 0.2, 1.5).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn model_json_field_names() {
        let spec = ModelSpec::excitatory_inhibitory(1.0, 1.2, 0.0, -3.0);
        let json = spec.to_json().unwrap();
        for key in ["populations", "tau", "gain", "threshold", "noise", "input", "fraction", "connectivity", "label"] {
            assert!(json.contains(&format!("\"{key}\"")), "missing {key}");
        }
        assert_eq!(ModelSpec::from_json(&json).unwrap(), spec);
        let text = r#"{"populations":[{"tau":1,"gain":2,"threshold":0,"noise":[[0,0.5],[3,1.0]],"input":-0.5,"fraction":1}],
                       "connectivity":[[1]],"label":"sched"}"#;
        let parsed = ModelSpec::from_json(text).unwrap();
        assert_eq!(parsed.populations[0].noise.value_at(4.0), 1.0);
    }

    #[test]
    fn invalid_models_rejected() {
        let mut spec = ModelSpec::hopf_pair(1.0, 1.0, 0.0);
        spec.populations[0].fraction = 0.6;
        assert!(spec.validate().is_err());
        let mut spec = ModelSpec::hopf_pair(1.0, 1.0, 0.0);
        spec.connectivity[1].pop();
        assert!(spec.validate().is_err());
        let mut spec = ModelSpec::one_population(1.0, 1.0, 0.0);
        spec.populations[0].tau = 0.0;
        assert!(spec.validate().is_err());
        let mut spec = ModelSpec::one_population(1.0, 1.0, 0.0);
        spec.populations[0].noise = (-1.0).into();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn parameter_names() {
        assert_eq!("I1".parse::<Parameter>().unwrap(), Parameter::Input(0));
        assert_eq!("lambda".parse::<Parameter>().unwrap(), Parameter::Noise);
        assert_eq!("j".parse::<Parameter>().unwrap(), Parameter::Coupling);
        assert!("I0".parse::<Parameter>().is_err());
        assert!("zeta".parse::<Parameter>().is_err());
        let base = ModelSpec::excitatory_inhibitory(1.0, 0.0, 0.0, -3.0);
        let scaled = Parameter::Coupling.apply(&base, 2.0);
        assert_eq!(scaled.connectivity[0][1], -24.0);
        assert_eq!(Parameter::Input(0).apply(&base, 1.5).populations[0].input.value_at(0.0), 1.5);
        assert_eq!(Parameter::Input(1).to_string(), "I2");
    }

    #[test]
    fn covariance_cross_population_without_initial_correlation_vanishes() {
        let spec = ModelSpec::excitatory_inhibitory(1.0, 1.5, 0.0, -3.0);
        let c0 = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        for (t1, t2) in [(0.0, 0.0), (1.0, 2.0), (5.0, 0.3)] {
            assert_eq!(covariance(&spec, 0, 1, t1, t2, &c0).unwrap(), 0.0);
        }
        assert!(covariance(&spec, 0, 0, -1.0, 1.0, &c0).is_err());
    }

    mod invariants {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn closure_is_a_monotone_probability(
                mu in -5.0f64..5.0,
                dmu in 0.0f64..2.0,
                v in 0.0f64..5.0,
                g in 0.1f64..5.0,
                gamma in -2.0f64..2.0,
            ) {
                let f = closure_f(mu, v, g, gamma).unwrap();
                prop_assert!((0.0..=1.0).contains(&f));
                prop_assert!(closure_f(mu + dmu, v, g, gamma).unwrap() >= f);
                prop_assert!(closure_f_dmu(mu, v, g, gamma).unwrap() >= 0.0);
            }

            #[test]
            fn closure_is_odd_about_the_threshold(mu in -5.0f64..5.0, v in 0.0f64..5.0, g in 0.1f64..5.0) {
                let sum = closure_f(mu, v, g, 0.0).unwrap() + closure_f(-mu, v, g, 0.0).unwrap();
                prop_assert!((sum - 1.0).abs() < 1e-12);
            }

            #[test]
            fn variance_relaxes_to_its_stationary_value(v0 in 0.0f64..5.0, tau in 0.1f64..5.0, lambda in 0.0f64..3.0) {
                let target = tau * lambda * lambda / 2.0;
                let late = variance_trajectory(v0, tau, lambda, 60.0 * tau).unwrap();
                prop_assert!((late - target).abs() < 1e-9 * (1.0 + target));
                prop_assert!((variance_trajectory(v0, tau, lambda, 0.0).unwrap() - v0).abs() < 1e-12);
            }
        }
    }
}
