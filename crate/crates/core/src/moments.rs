//! Closed moment equations of the mean-field limit.
//!
//! For Gaussian initial data the mean-field solution stays Gaussian and its
//! per-population mean `μ` and variance `v` obey
//!
//! ```text
//! μ̇_α = −μ_α/τ_α + Σ_β J_αβ f_β(μ_β, v_β) + I_α(t)
//! v̇_α = −2 v_α/τ_α + λ_α(t)²
//! ```
//!
//! The variance equation is decoupled and has a closed form
//! ([`crate::model::variance_at`]); it is still integrated alongside `μ` so
//! that scheduled noise follows the same code path, and the closed form
//! serves as a running check in the tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, MomentState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum OdeMethod {
    Rk4Fixed { dt: f64 },
    Rk45Adaptive { rtol: f64, atol: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdeConfig {
    #[serde(flatten)]
    pub method: OdeMethod,
    pub t_end: f64,
    /// Resample the output on a uniform grid with this spacing.
    #[serde(default)]
    pub sample_dt: Option<f64>,
    /// Upper bound on adaptive steps.
    #[serde(default)]
    pub max_step: Option<f64>,
}

impl OdeConfig {
    pub fn adaptive(t_end: f64) -> Self {
        OdeConfig { method: OdeMethod::Rk45Adaptive { rtol: 1e-9, atol: 1e-9 }, t_end, sample_dt: None, max_step: None }
    }

    pub fn rk4(dt: f64, t_end: f64) -> Self {
        OdeConfig { method: OdeMethod::Rk4Fixed { dt }, t_end, sample_dt: None, max_step: None }
    }

    pub fn with_sample_dt(mut self, dt: f64) -> Self {
        self.sample_dt = Some(dt);
        self
    }

    pub fn with_max_step(mut self, h: f64) -> Self {
        self.max_step = Some(h);
        self
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return bad("t_end must be finite and non-negative");
        }
        match self.method {
            OdeMethod::Rk4Fixed { dt } if !(dt > 0.0) => return bad("rk4 step must be positive"),
            OdeMethod::Rk45Adaptive { rtol, atol } if !(rtol > 0.0 && atol > 0.0) => {
                return bad("tolerances must be positive")
            }
            _ => {}
        }
        if matches!(self.sample_dt, Some(h) if !(h > 0.0)) {
            return bad("sample_dt must be positive");
        }
        if matches!(self.max_step, Some(h) if !(h > 0.0)) {
            return bad("max_step must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentDerivative {
    pub dmean: Vec<f64>,
    pub dvariance: Vec<f64>,
}

/// Right-hand side of the moment equations.
pub fn moment_rhs(state: &MomentState, spec: &ModelSpec) -> Result<MomentDerivative> {
    let p = spec.n_populations();
    if state.mean.len() != p || state.variance.len() != p {
        return Err(Error::Domain(format!("moment state must have {p} components")));
    }
    if let Some(v) = state.variance.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("variance must be non-negative, got {v}")));
    }
    let mut y = state.mean.clone();
    y.extend_from_slice(&state.variance);
    let mut dy = vec![0.0; 2 * p];
    rhs_into(spec, state.time, &y, &mut dy);
    Ok(MomentDerivative { dmean: dy[..p].to_vec(), dvariance: dy[p..].to_vec() })
}

/// Packed right-hand side: `y = [μ_1..μ_P, v_1..v_P]`.
pub(crate) fn rhs_into(spec: &ModelSpec, t: f64, y: &[f64], dy: &mut [f64]) {
    let p = spec.n_populations();
    let (mu, v) = y.split_at(p);
    for (a, pop) in spec.populations.iter().enumerate() {
        let coupling: f64 = spec.connectivity[a]
            .iter()
            .zip(&spec.populations)
            .enumerate()
            .map(|(b, (w, q))| w * q.mean_rate(mu[b], v[b].max(0.0)))
            .sum();
        dy[a] = -mu[a] / pop.tau + coupling + pop.input.value_at(t);
        let lam = pop.noise.value_at(t);
        dy[p + a] = -2.0 * v[a] / pop.tau + lam * lam;
    }
}

/// Sampled solution of the moment equations.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTrajectory {
    pub samples: Vec<MomentState>,
    /// Packed time derivative at each sample, used for Hermite interpolation.
    derivatives: Vec<Vec<f64>>,
}

impl MomentTrajectory {
    pub fn start(&self) -> f64 {
        self.samples.first().map_or(0.0, |s| s.time)
    }

    pub fn end(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.time)
    }

    pub fn last(&self) -> &MomentState {
        self.samples.last().expect("trajectory holds at least the initial state")
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    /// Time series of the mean of population `alpha`.
    pub fn mean_series(&self, alpha: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.mean[alpha]).collect()
    }

    pub fn variance_series(&self, alpha: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.variance[alpha]).collect()
    }

    fn packed(s: &MomentState) -> Vec<f64> {
        let mut y = s.mean.clone();
        y.extend_from_slice(&s.variance);
        y
    }

    /// Packed state at time `t` by cubic Hermite interpolation.
    fn interpolate(&self, t: f64) -> Result<Vec<f64>> {
        let (start, end) = (self.start(), self.end());
        if !(t >= start && t <= end) {
            return Err(Error::OutOfRange { time: t, start, end });
        }
        let idx = self.samples.partition_point(|s| s.time <= t);
        if idx > 0 && self.samples[idx - 1].time == t {
            return Ok(Self::packed(&self.samples[idx - 1]));
        }
        let (k0, k1) = (idx - 1, idx);
        let (s0, s1) = (&self.samples[k0], &self.samples[k1]);
        let h = s1.time - s0.time;
        let u = (t - s0.time) / h;
        let (y0, y1) = (Self::packed(s0), Self::packed(s1));
        let (d0, d1) = (&self.derivatives[k0], &self.derivatives[k1]);
        let h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
        let h10 = u * (1.0 - u) * (1.0 - u);
        let h01 = u * u * (3.0 - 2.0 * u);
        let h11 = u * u * (u - 1.0);
        Ok((0..y0.len()).map(|i| h00 * y0[i] + h10 * h * d0[i] + h01 * y1[i] + h11 * h * d1[i]).collect())
    }

    /// Interpolated moment state at `t`.
    pub fn state_at(&self, t: f64) -> Result<MomentState> {
        let y = self.interpolate(t)?;
        let p = y.len() / 2;
        Ok(MomentState { time: t, mean: y[..p].to_vec(), variance: y[p..].iter().map(|v| v.max(0.0)).collect() })
    }

    /// Same trajectory on a uniform grid `start, start + dt, …` up to the end.
    pub fn resample(&self, dt: f64) -> Result<MomentTrajectory> {
        if !(dt > 0.0) {
            return Err(Error::InvalidConfig("resampling step must be positive".into()));
        }
        let (start, end) = (self.start(), self.end());
        let n = ((end - start) / dt + 1e-9).floor() as usize;
        let mut samples = Vec::with_capacity(n + 1);
        let mut derivatives = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let t = (start + k as f64 * dt).min(end);
            let y = self.interpolate(t)?;
            let p = y.len() / 2;
            samples.push(MomentState { time: t, mean: y[..p].to_vec(), variance: y[p..].to_vec() });
            derivatives.push(self.derivative_at(t)?);
        }
        Ok(MomentTrajectory { samples, derivatives })
    }

    fn derivative_at(&self, t: f64) -> Result<Vec<f64>> {
        let idx = self.samples.partition_point(|s| s.time <= t);
        if idx > 0 && self.samples[idx - 1].time == t {
            return Ok(self.derivatives[idx - 1].clone());
        }
        let (k0, k1) = (idx - 1, idx);
        let (s0, s1) = (&self.samples[k0], &self.samples[k1]);
        let h = s1.time - s0.time;
        let u = (t - s0.time) / h;
        let (y0, y1) = (Self::packed(s0), Self::packed(s1));
        let (d0, d1) = (&self.derivatives[k0], &self.derivatives[k1]);
        let dh00 = 6.0 * u * (u - 1.0) / h;
        let dh10 = (1.0 - u) * (1.0 - 3.0 * u);
        let dh01 = -dh00;
        let dh11 = u * (3.0 * u - 2.0);
        Ok((0..y0.len()).map(|i| dh00 * y0[i] + dh10 * d0[i] + dh01 * y1[i] + dh11 * d1[i]).collect())
    }
}

/// Per-population `(mean, variance)` of the Gaussian mean-field law at `t`.
pub fn gaussian_law_at(traj: &MomentTrajectory, t: f64) -> Result<Vec<(f64, f64)>> {
    let s = traj.state_at(t)?;
    Ok(s.mean.into_iter().zip(s.variance).collect())
}

const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_E: [f64; 7] =
    [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

struct Recorder<'a> {
    spec: &'a ModelSpec,
    samples: Vec<MomentState>,
    derivatives: Vec<Vec<f64>>,
}

impl Recorder<'_> {
    fn push(&mut self, t: f64, y: &[f64], dy: &[f64]) -> Result<()> {
        let p = self.spec.n_populations();
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::Integration(format!("non-finite state at t = {t}")));
        }
        if let Some(v) = y[p..].iter().find(|v| **v < -1e-12) {
            return Err(Error::Integration(format!("variance became negative ({v}) at t = {t}")));
        }
        if self.samples.last().is_some_and(|s| s.time >= t) {
            return Ok(());
        }
        self.samples.push(MomentState {
            time: t,
            mean: y[..p].to_vec(),
            variance: y[p..].iter().map(|v| v.max(0.0)).collect(),
        });
        self.derivatives.push(dy.to_vec());
        Ok(())
    }
}

/// Integrates the moment equations from `init` over `[init.time, init.time + cfg.t_end]`.
pub fn integrate(spec: &ModelSpec, init: &MomentState, cfg: &OdeConfig) -> Result<MomentTrajectory> {
    spec.validate()?;
    cfg.validate()?;
    let p = spec.n_populations();
    if init.mean.len() != p || init.variance.len() != p {
        return Err(Error::Domain(format!("initial state must have {p} components")));
    }
    if init.variance.iter().any(|v| !(*v >= 0.0)) || init.mean.iter().any(|m| !m.is_finite()) {
        return Err(Error::Domain("initial variance must be non-negative and means finite".into()));
    }
    let t0 = init.time;
    let t1 = t0 + cfg.t_end;
    let mut y = MomentTrajectory::packed(init);
    let mut dy = vec![0.0; 2 * p];
    rhs_into(spec, t0, &y, &mut dy);
    let mut rec = Recorder { spec, samples: Vec::new(), derivatives: Vec::new() };
    rec.push(t0, &y, &dy)?;

    // Integrate piecewise between schedule breakpoints so no step straddles a jump.
    let mut stops: Vec<f64> = spec.breakpoints().into_iter().filter(|b| *b > t0 && *b < t1).collect();
    stops.push(t1);
    let mut t = t0;
    let mut h_adapt: Option<f64> = None;
    for stop in stops {
        match cfg.method {
            OdeMethod::Rk4Fixed { dt } => rk4_segment(spec, &mut t, stop, dt, &mut y, &mut rec)?,
            OdeMethod::Rk45Adaptive { rtol, atol } => {
                rk45_segment(spec, &mut t, stop, rtol, atol, cfg.max_step, &mut h_adapt, &mut y, &mut rec)?
            }
        }
    }
    let traj = MomentTrajectory { samples: rec.samples, derivatives: rec.derivatives };
    match cfg.sample_dt {
        Some(h) => traj.resample(h),
        None => Ok(traj),
    }
}

fn rk4_segment(spec: &ModelSpec, t: &mut f64, stop: f64, dt: f64, y: &mut [f64], rec: &mut Recorder<'_>) -> Result<()> {
    let n = y.len();
    let steps = ((stop - *t) / dt - 1e-9).ceil().max(0.0) as usize;
    let start = *t;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for k in 0..steps {
        let tk = start + k as f64 * dt;
        let h = if k + 1 == steps { stop - tk } else { dt };
        rhs_into(spec, tk, y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        rhs_into(spec, tk + 0.5 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        rhs_into(spec, tk + 0.5 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        rhs_into(spec, tk + h, &tmp, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let tn = if k + 1 == steps { stop } else { start + (k + 1) as f64 * dt };
        rhs_into(spec, tn, y, &mut k1);
        rec.push(tn, y, &k1)?;
    }
    *t = stop;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn rk45_segment(
    spec: &ModelSpec,
    t: &mut f64,
    stop: f64,
    rtol: f64,
    atol: f64,
    max_step: Option<f64>,
    h_state: &mut Option<f64>,
    y: &mut [f64],
    rec: &mut Recorder<'_>,
) -> Result<()> {
    let n = y.len();
    let span = stop - *t;
    if span <= 0.0 {
        return Ok(());
    }
    let h_max = max_step.unwrap_or(f64::INFINITY).min(span);
    let mut h = h_state.unwrap_or(1e-3).min(h_max);
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    rhs_into(spec, *t, y, &mut k[0]);
    let mut rejections = 0usize;
    while *t < stop {
        let last = *t + h >= stop;
        if last {
            h = stop - *t;
        }
        for s in 1..7 {
            for i in 0..n {
                tmp[i] = y[i] + h * (0..s).map(|j| DP_A[s][j] * k[j][i]).sum::<f64>();
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            rhs_into(spec, *t + DP_C[s] * h, &tmp, &mut tail[0]);
        }
        let mut err: f64 = 0.0;
        for i in 0..n {
            y_new[i] = y[i] + h * (0..7).map(|j| DP_B[j] * k[j][i]).sum::<f64>();
            let e = h * (0..7).map(|j| DP_E[j] * k[j][i]).sum::<f64>();
            let scale = atol + rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / scale).abs());
        }
        if !err.is_finite() {
            return Err(Error::Integration(format!("non-finite error estimate at t = {}", *t)));
        }
        if err <= 1.0 {
            *t = if last { stop } else { *t + h };
            y.copy_from_slice(&y_new);
            // FSAL: the last stage is the derivative at the new point.
            let fsal = k[6].clone();
            k[0].copy_from_slice(&fsal);
            rec.push(*t, y, &k[0])?;
            rejections = 0;
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if !last {
                h = (h * factor).min(h_max);
            } else {
                *h_state = Some((h * factor).min(max_step.unwrap_or(f64::INFINITY)).max(1e-6));
            }
        } else {
            rejections += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            if rejections > 60 || h < 1e-14 * (1.0 + t.abs()) {
                return Err(Error::Integration(format!("step size underflow at t = {}", *t)));
            }
        }
    }
    Ok(())
}
