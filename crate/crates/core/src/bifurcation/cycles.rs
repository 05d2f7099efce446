use serde::{Deserialize, Serialize};

use super::equilibria::{default_seeds, find_equilibria};
use crate::error::{Error, Result};
use crate::model::{stationary_variance, ModelSpec, MomentState, Parameter};
use crate::moments::{self, OdeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleOptions {
    pub t_transient: f64,
    pub t_measure: f64,
    pub sample_dt: f64,
    /// Peak-to-peak amplitude below which the orbit counts as a fixed point.
    pub amplitude_floor: f64,
    /// Largest relative spread of successive periods (and peak heights) for a cycle.
    pub jitter_bound: f64,
    /// How many times an ambiguous measurement is continued (with a doubled window) before giving up.
    pub extensions: usize,
}

impl Default for CycleOptions {
    fn default() -> Self {
        CycleOptions {
            t_transient: 300.0,
            t_measure: 100.0,
            sample_dt: 0.01,
            amplitude_floor: 1e-4,
            jitter_bound: 0.01,
            extensions: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CycleReport {
    /// Settled on a fixed point.
    None {
        mean: Vec<f64>,
    },
    Cycle {
        /// Peak-to-peak amplitude of each population mean.
        amplitude: Vec<f64>,
        period: f64,
        /// Relative spread of the measured periods.
        jitter: f64,
        /// Time average of each population mean over the window.
        center: Vec<f64>,
    },
    Unresolved {
        amplitude: Vec<f64>,
        reason: String,
    },
}

impl CycleReport {
    pub fn is_cycle(&self) -> bool {
        matches!(self, CycleReport::Cycle { .. })
    }

    pub fn period(&self) -> Option<f64> {
        match self {
            CycleReport::Cycle { period, .. } => Some(*period),
            _ => None,
        }
    }
}

enum Verdict {
    Decided(CycleReport),
    Ambiguous(Vec<f64>, String),
}

/// Peak times (parabolically refined) and heights of a uniformly sampled series.
fn peaks(series: &[f64], t0: f64, dt: f64, floor: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for k in 1..series.len().saturating_sub(1) {
        let (a, b, c) = (series[k - 1], series[k], series[k + 1]);
        if b > a && b >= c && b > floor {
            let denom = a - 2.0 * b + c;
            let shift = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
            let height = b - 0.25 * (a - c) * shift;
            out.push((t0 + (k as f64 + shift) * dt, height));
        }
    }
    out
}

/// Oscillation whose swing shrinks by a constant factor per turn: a slow
/// spiral into a focus. An orbit winding onto a cycle from outside has
/// ratios that creep towards one instead.
fn spirals_in(series: &[f64], dt: f64) -> bool {
    let maxima = peaks(series, 0.0, dt, f64::NEG_INFINITY);
    let negated: Vec<f64> = series.iter().map(|x| -x).collect();
    let minima = peaks(&negated, 0.0, dt, f64::NEG_INFINITY);
    let swings: Vec<f64> =
        maxima.iter().filter_map(|&(t, h)| minima.iter().find(|m| m.0 > t).map(|m| h + m.1)).collect();
    if swings.len() < 5 || swings.iter().any(|a| *a <= 0.0) {
        return false;
    }
    let ratios: Vec<f64> = swings.windows(2).map(|w| w[1] / w[0]).collect();
    let hi = ratios.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x));
    let lo = ratios.iter().fold(f64::INFINITY, |m, x| m.min(*x));
    let shrink = 1.0 - ratios.iter().sum::<f64>() / ratios.len() as f64;
    hi < 1.0 - 1e-4 && hi - lo < 0.1 * shrink
}

fn analyse(traj: &moments::MomentTrajectory, opts: &CycleOptions) -> Verdict {
    let p = traj.last().mean.len();
    let series: Vec<Vec<f64>> = (0..p).map(|a| traj.mean_series(a)).collect();
    let amplitude: Vec<f64> = series
        .iter()
        .map(|s| s.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x)) - s.iter().fold(f64::INFINITY, |m, x| m.min(*x)))
        .collect();
    let (lead, &amp) = amplitude.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    if amp < opts.amplitude_floor {
        return Verdict::Decided(CycleReport::None { mean: traj.last().mean.clone() });
    }
    let s = &series[lead];
    let min = s.iter().fold(f64::INFINITY, |m, x| m.min(*x));
    let pk = peaks(s, traj.start(), opts.sample_dt, min + 0.5 * amp);
    if spirals_in(s, opts.sample_dt) {
        return Verdict::Decided(CycleReport::None { mean: traj.last().mean.clone() });
    }
    if pk.len() < 3 {
        return Verdict::Ambiguous(amplitude, format!("only {} maxima in the window", pk.len()));
    }
    let periods: Vec<f64> = pk.windows(2).map(|w| w[1].0 - w[0].0).collect();
    let mean_period = periods.iter().sum::<f64>() / periods.len() as f64;
    let spread =
        periods.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x)) - periods.iter().fold(f64::INFINITY, |m, x| m.min(*x));
    let jitter = spread / mean_period;
    let heights: Vec<f64> = pk.iter().map(|x| x.1).collect();
    let height_drift = (heights[heights.len() - 1] - heights[0]).abs() / amp;
    if jitter < opts.jitter_bound && height_drift < opts.jitter_bound {
        let center = series.iter().map(|s| s.iter().sum::<f64>() / s.len() as f64).collect();
        Verdict::Decided(CycleReport::Cycle { amplitude, period: mean_period, jitter, center })
    } else {
        Verdict::Ambiguous(
            amplitude,
            format!("period jitter {jitter:.2e}, peak drift {height_drift:.2e} above {:.0e}", opts.jitter_bound),
        )
    }
}

/// Integrates the moment equations from `init`, discards a transient and
/// classifies the remaining orbit as a fixed point or a limit cycle.
pub fn characterize_cycle(spec: &ModelSpec, init: &MomentState, opts: &CycleOptions) -> Result<CycleReport> {
    if !(opts.t_transient >= 0.0 && opts.t_measure > 0.0 && opts.sample_dt > 0.0) {
        return Err(Error::InvalidConfig("cycle windows must be positive".into()));
    }
    let mut state = init.clone();
    let mut t_measure = opts.t_measure;
    let mut last = None;
    for round in 0..=opts.extensions {
        let transient = if round == 0 { opts.t_transient } else { 0.0 };
        if transient > 0.0 {
            state = moments::integrate(spec, &state, &OdeConfig::adaptive(transient))?.last().clone();
        }
        let cfg = OdeConfig::adaptive(t_measure).with_sample_dt(opts.sample_dt);
        let traj = moments::integrate(spec, &state, &cfg)?;
        match analyse(&traj, opts) {
            Verdict::Decided(report) => return Ok(report),
            Verdict::Ambiguous(amplitude, reason) => last = Some((amplitude, reason)),
        }
        state = traj.last().clone();
        t_measure *= 2.0;
    }
    let (amplitude, reason) = last.expect("at least one measurement");
    Ok(CycleReport::Unresolved { amplitude, reason })
}

/// Initial state just off the repelling focus of the mean dynamics, if there is one.
pub(crate) fn near_unstable_focus(spec: &ModelSpec) -> Result<Option<MomentState>> {
    let set = find_equilibria(spec, &default_seeds(spec))?;
    let focus = set.equilibria.iter().find(|e| e.is_focus() && e.eigenvalues.iter().all(|ev| ev[0] > 0.0));
    Ok(focus.map(|e| {
        let mut mean = e.mu_star.clone();
        mean[0] += 1e-3;
        MomentState::new(0.0, mean, stationary_variance(spec))
    }))
}

/// Bisects for the parameter value in `[lo, hi]` where a stable cycle around
/// the repelling focus appears or disappears. Exactly one end must show a
/// cycle. Returns the bracket midpoint and the periods measured on the cycle
/// side while closing in, which diverge when the cycle is born from a homoclinic loop.
pub fn cycle_onset(
    spec: &ModelSpec,
    parameter: Parameter,
    lo: f64,
    hi: f64,
    tolerance: f64,
    opts: &CycleOptions,
) -> Result<(f64, Vec<(f64, f64)>)> {
    let has_cycle = |x: f64| -> Result<Option<f64>> {
        let s = parameter.apply(spec, x);
        match near_unstable_focus(&s)? {
            Some(init) => Ok(characterize_cycle(&s, &init, opts)?.period()),
            None => Ok(None),
        }
    };
    let (mut a, mut b) = (lo, hi);
    let (ca, cb) = (has_cycle(a)?, has_cycle(b)?);
    if ca.is_some() == cb.is_some() {
        return Err(Error::InvalidConfig(format!("cycle presence must differ at the ends of [{lo}, {hi}]")));
    }
    let cycle_at_b = cb.is_some();
    let mut periods = Vec::new();
    if let Some(p) = ca.or(cb) {
        periods.push((if cycle_at_b { b } else { a }, p));
    }
    while (b - a).abs() > tolerance {
        let m = 0.5 * (a + b);
        match has_cycle(m)? {
            Some(period) => {
                periods.push((m, period));
                if cycle_at_b {
                    b = m
                } else {
                    a = m
                }
            }
            None => {
                if cycle_at_b {
                    a = m
                } else {
                    b = m
                }
            }
        }
    }
    Ok((0.5 * (a + b), periods))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_refinement_on_sine() {
        let dt = 0.01;
        let s: Vec<f64> = (0..2000).map(|k| (k as f64 * dt * 2.0).sin()).collect();
        let pk = peaks(&s, 0.0, dt, 0.5);
        let period = pk[1].0 - pk[0].0;
        assert!((period - std::f64::consts::PI).abs() < 1e-5);
        assert!((pk[0].1 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn decaying_spiral_is_not_a_cycle() {
        let dt = 0.01;
        let decay: Vec<f64> =
            (0..40000).map(|k| (-0.005 * k as f64 * dt).exp() * (k as f64 * dt * 2.0).sin()).collect();
        assert!(spirals_in(&decay, dt));
        // Relaxation onto a cycle of amplitude one.
        let onto: Vec<f64> =
            (0..40000).map(|k| (1.0 + (-0.005 * k as f64 * dt).exp()) * (k as f64 * dt * 2.0).sin()).collect();
        assert!(!spirals_in(&onto, dt));
        let steady: Vec<f64> = (0..40000).map(|k| (k as f64 * dt * 2.0).sin()).collect();
        assert!(!spirals_in(&steady, dt));
    }

    #[test]
    fn slow_spiral_near_hopf_is_a_fixed_point() {
        // Just past the Hopf point the focus attracts with rate below 1e-2.
        let spec = ModelSpec::excitatory_inhibitory(1.0, 2.0, 0.0, -3.0);
        let init = MomentState::new(0.0, vec![0.0, 0.0], stationary_variance(&spec));
        let r = characterize_cycle(&spec, &init, &CycleOptions::default()).unwrap();
        assert!(matches!(r, CycleReport::None { .. }), "{r:?}");
    }

    #[test]
    fn stable_focus_reports_none() {
        let spec = ModelSpec::excitatory_inhibitory(1.0, 2.5, 0.0, -3.0);
        let init = MomentState::new(0.0, vec![0.0, 0.0], stationary_variance(&spec));
        let r = characterize_cycle(&spec, &init, &CycleOptions::default()).unwrap();
        assert!(matches!(r, CycleReport::None { .. }), "{r:?}");
    }

    #[test]
    fn oscillation_at_intermediate_noise() {
        let spec = ModelSpec::excitatory_inhibitory(1.0, 1.5, 0.0, -3.0);
        let init = near_unstable_focus(&spec).unwrap().expect("repelling focus");
        let r = characterize_cycle(&spec, &init, &CycleOptions::default()).unwrap();
        let period = r.period().expect("cycle");
        assert!(period > 1.0 && period < 100.0);
    }
}
