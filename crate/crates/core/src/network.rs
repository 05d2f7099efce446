//! Finite-N stochastic network and its Euler–Maruyama ensemble engine.
//!
//! Neuron `i` of population `α = p(i)` obeys
//!
//! ```text
//! dV^i = (−V^i/τ_α + I_α(t) + Σ_β J_αβ · mean_{j ∈ β} S_β(V^j)) dt + λ_α dB^i
//! ```
//!
//! i.e. the synaptic weight from `j` to `i` is `J_{p(i)p(j)} / N_{p(j)}`. The
//! coupling only sees population means of the firing rates, so a step costs
//! `O(N)`: one pass to accumulate the `P` mean rates, one pass to update.
//!
//! Neurons are stored contiguously by population. Noise comes from
//! [`StepNoise`], keyed by `(seed, realization, step, neuron)`, so results do
//! not depend on how realizations are scheduled across threads.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelSpec, MomentState};
use crate::moments::{self, OdeConfig};
use crate::rng::{StepNoise, INITIAL_STEP};

/// Default budget for full-trajectory recording: 4 GiB.
pub const DEFAULT_MEMORY_CAP: u64 = 4 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordMode {
    FullTrajectories,
    PopulationStats,
    FinalState,
}

fn one() -> usize {
    1
}

fn default_cap() -> u64 {
    DEFAULT_MEMORY_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_total: usize,
    pub dt: f64,
    pub t_end: f64,
    pub n_realizations: usize,
    pub seed: u64,
    pub record_mode: RecordMode,
    /// Record every k-th step (the final step is always recorded).
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default = "default_cap")]
    pub memory_cap_bytes: u64,
}

impl SimConfig {
    pub fn new(n_total: usize, dt: f64, t_end: f64, n_realizations: usize, seed: u64) -> Self {
        SimConfig {
            n_total,
            dt,
            t_end,
            n_realizations,
            seed,
            record_mode: RecordMode::PopulationStats,
            record_every: 1,
            memory_cap_bytes: DEFAULT_MEMORY_CAP,
        }
    }

    pub fn with_record_mode(mut self, mode: RecordMode) -> Self {
        self.record_mode = mode;
        self
    }

    pub fn with_record_every(mut self, k: usize) -> Self {
        self.record_every = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_total == 0 {
            return bad("n_total must be at least 1".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be finite and non-negative, got {}", self.t_end));
        }
        if self.n_realizations == 0 {
            return bad("n_realizations must be at least 1".into());
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        Ok(())
    }

    /// Non-fatal concerns about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.dt > 0.01 {
            out.push(format!("dt = {} exceeds the recommended 0.01", self.dt));
        }
        out
    }

    /// Number of Euler–Maruyama steps; the horizon is rounded up to a whole step.
    pub fn n_steps(&self) -> usize {
        let ratio = self.t_end / self.dt;
        let nearest = ratio.round();
        if (ratio - nearest).abs() < 1e-9 * ratio.max(1.0) {
            nearest as usize
        } else {
            ratio.ceil() as usize
        }
    }

    fn recorded_steps(&self) -> Vec<usize> {
        let n = self.n_steps();
        let mut steps: Vec<usize> = (0..=n).step_by(self.record_every).collect();
        if steps.last() != Some(&n) {
            steps.push(n);
        }
        steps
    }
}

/// Per-population law of the i.i.d. Gaussian initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialLaw {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl InitialLaw {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Self {
        InitialLaw { mean, variance }
    }

    /// Every neuron of population `α` starts exactly at `values[α]`.
    pub fn point(values: Vec<f64>) -> Self {
        let variance = vec![0.0; values.len()];
        InitialLaw { mean: values, variance }
    }

    pub fn validate(&self, n_populations: usize) -> Result<()> {
        if self.mean.len() != n_populations || self.variance.len() != n_populations {
            return Err(Error::InvalidConfig(format!("initial law must have {n_populations} means and variances")));
        }
        if self.variance.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig("initial variances must be finite and non-negative".into()));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidConfig("initial means must be finite".into()));
        }
        Ok(())
    }

    pub fn to_moment_state(&self) -> MomentState {
        MomentState::new(0.0, self.mean.clone(), self.variance.clone())
    }
}

impl From<&MomentState> for InitialLaw {
    fn from(s: &MomentState) -> Self {
        InitialLaw { mean: s.mean.clone(), variance: s.variance.clone() }
    }
}

/// Largest-remainder apportionment of `n` neurons among the given fractions.
pub fn population_sizes(fractions: &[f64], n: usize) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    // Ties go to the lower population index (stable sort).
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    for &a in order.iter().take(n.saturating_sub(assigned)) {
        sizes[a] += 1;
    }
    sizes
}

/// Contiguous assignment of neuron indices to populations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl Layout {
    pub fn new(spec: &ModelSpec, n_total: usize) -> Result<Self> {
        let fractions: Vec<f64> = spec.populations.iter().map(|p| p.fraction).collect();
        Self::from_sizes(population_sizes(&fractions, n_total))
    }

    pub fn from_sizes(sizes: Vec<usize>) -> Result<Self> {
        if let Some(a) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidConfig(format!("population {a} receives no neurons")));
        }
        let mut offsets = vec![0];
        for s in &sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        Ok(Layout { sizes, offsets })
    }

    /// Rebuilds the layout from a neuron → population map, which must be
    /// sorted so that every population occupies a contiguous block.
    pub fn from_population_of(population_of: &[usize], n_populations: usize) -> Result<Self> {
        if population_of.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidConfig("neurons must be grouped by population".into()));
        }
        let mut sizes = vec![0; n_populations];
        for &a in population_of {
            *sizes.get_mut(a).ok_or_else(|| Error::InvalidConfig(format!("population index {a} out of range")))? += 1;
        }
        Self::from_sizes(sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_total(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn range(&self, alpha: usize) -> std::ops::Range<usize> {
        self.offsets[alpha]..self.offsets[alpha + 1]
    }

    pub fn population_of(&self) -> Vec<usize> {
        self.sizes.iter().enumerate().flat_map(|(a, &s)| std::iter::repeat_n(a, s)).collect()
    }
}

/// Potentials of `R` realizations of an `N`-neuron network at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    /// `voltages[r][i]`.
    pub voltages: Vec<Vec<f64>>,
    pub population_of: Vec<usize>,
    pub time: f64,
    /// Steps taken since the initial condition.
    pub step: u64,
}

impl EnsembleState {
    /// Draws the initial condition of every realization.
    pub fn sample(spec: &ModelSpec, sim: &SimConfig, init: &InitialLaw) -> Result<Self> {
        spec.validate()?;
        sim.validate()?;
        init.validate(spec.n_populations())?;
        let layout = Layout::new(spec, sim.n_total)?;
        let voltages = (0..sim.n_realizations).map(|r| initial_voltages(&layout, init, sim.seed, r as u64)).collect();
        Ok(EnsembleState { voltages, population_of: layout.population_of(), time: 0.0, step: 0 })
    }
}

fn initial_voltages(layout: &Layout, init: &InitialLaw, seed: u64, realization: u64) -> Vec<f64> {
    let noise = StepNoise::new(seed, realization, INITIAL_STEP);
    let mut v = vec![0.0; layout.n_total()];
    for (a, (m, var)) in init.mean.iter().zip(&init.variance).enumerate() {
        let sd = var.sqrt();
        for i in layout.range(a) {
            v[i] = if sd > 0.0 { m + sd * noise.normal(i as u64) } else { *m };
        }
    }
    v
}

/// Mean firing rate `mean_{j∈β} S_β(V^j)` of every population.
fn population_rates(spec: &ModelSpec, layout: &Layout, v: &[f64], rates: &mut [f64]) {
    for (b, pop) in spec.populations.iter().enumerate() {
        let block = &v[layout.range(b)];
        let sum: f64 = block.iter().map(|&x| pop.rate(x)).sum();
        rates[b] = sum / block.len() as f64;
    }
}

/// Deterministic drift of every neuron: the noiseless network vector field.
pub fn network_drift(spec: &ModelSpec, layout: &Layout, t: f64, v: &[f64], out: &mut [f64]) {
    let mut rates = vec![0.0; spec.n_populations()];
    population_rates(spec, layout, v, &mut rates);
    for (a, pop) in spec.populations.iter().enumerate() {
        let c = pop.input.value_at(t) + dot(&spec.connectivity[a], &rates);
        for i in layout.range(a) {
            out[i] = -v[i] / pop.tau + c;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One Euler–Maruyama step of one realization. `drive[α]` is the constant
/// part of the drift of population `α` (input plus coupling); `noise(i)`
/// supplies the standard Gaussian increment of neuron `i`. Returns `false`
/// if any potential became non-finite.
#[inline]
fn advance(
    spec: &ModelSpec,
    layout: &Layout,
    t: f64,
    dt: f64,
    drive: &[f64],
    v: &mut [f64],
    noise: impl Fn(usize) -> f64,
) -> bool {
    let sqrt_dt = dt.sqrt();
    let mut finite = true;
    for (a, pop) in spec.populations.iter().enumerate() {
        let inv_tau = 1.0 / pop.tau;
        let c = drive[a];
        let sigma = pop.noise.value_at(t) * sqrt_dt;
        let range = layout.range(a);
        if sigma == 0.0 {
            for x in &mut v[range] {
                *x += dt * (-*x * inv_tau + c);
                finite &= x.is_finite();
            }
        } else {
            for i in range {
                let x = &mut v[i];
                *x += dt * (-*x * inv_tau + c) + sigma * noise(i);
                finite &= x.is_finite();
            }
        }
    }
    finite
}

fn network_drive(spec: &ModelSpec, t: f64, rates: &[f64], drive: &mut [f64]) {
    for (a, pop) in spec.populations.iter().enumerate() {
        drive[a] = pop.input.value_at(t) + dot(&spec.connectivity[a], rates);
    }
}

/// Advances every realization by one step using the supplied increments,
/// `noise_draws[r][i]` being the standard Gaussian for realization `r`, neuron `i`.
pub fn em_step(state: &mut EnsembleState, spec: &ModelSpec, dt: f64, noise_draws: &[Vec<f64>]) -> Result<()> {
    let layout = Layout::from_population_of(&state.population_of, spec.n_populations())?;
    if noise_draws.len() != state.voltages.len() || noise_draws.iter().any(|d| d.len() != layout.n_total()) {
        return Err(Error::InvalidConfig("noise draws must match the ensemble shape".into()));
    }
    let p = spec.n_populations();
    let (mut rates, mut drive) = (vec![0.0; p], vec![0.0; p]);
    for (v, xi) in state.voltages.iter_mut().zip(noise_draws) {
        if v.len() != layout.n_total() {
            return Err(Error::InvalidConfig("every realization must hold N potentials".into()));
        }
        population_rates(spec, &layout, v, &mut rates);
        network_drive(spec, state.time, &rates, &mut drive);
        if !advance(spec, &layout, state.time, dt, &drive, v, |i| xi[i]) {
            return Err(Error::Diverged { step: state.step as usize + 1, time: state.time + dt });
        }
    }
    state.step += 1;
    state.time = state.step as f64 * dt;
    Ok(())
}

/// Per-population mean and unbiased variance of one realization.
pub fn empirical_stats(voltages: &[f64], population_of: &[usize], n_populations: usize) -> Result<Vec<(f64, f64)>> {
    if voltages.len() != population_of.len() {
        return Err(Error::InvalidConfig("voltages and population map differ in length".into()));
    }
    let mut acc = vec![(0usize, 0.0f64); n_populations];
    for (&x, &a) in voltages.iter().zip(population_of) {
        let slot = acc.get_mut(a).ok_or_else(|| Error::InvalidConfig(format!("population index {a} out of range")))?;
        slot.0 += 1;
        slot.1 += x;
    }
    let means: Vec<f64> = acc.iter().map(|(n, s)| s / *n as f64).collect();
    let mut ss = vec![0.0; n_populations];
    for (&x, &a) in voltages.iter().zip(population_of) {
        ss[a] += (x - means[a]).powi(2);
    }
    acc.iter()
        .enumerate()
        .map(
            |(a, (n, _))| {
                if *n < 2 {
                    Err(Error::EmptyPopulation(a))
                } else {
                    Ok((means[a], ss[a] / (*n - 1) as f64))
                }
            },
        )
        .collect()
}

fn block_stats(block: &[f64]) -> (f64, f64) {
    let n = block.len() as f64;
    let mean = block.iter().sum::<f64>() / n;
    let ss: f64 = block.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, if block.len() > 1 { ss / (n - 1.0) } else { 0.0 })
}

/// Per-population statistics over recorded times.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSeries {
    pub times: Vec<f64>,
    /// `mean[α][k]`: empirical mean, averaged over realizations.
    pub mean: Vec<Vec<f64>>,
    /// `variance[α][k]`: within-realization unbiased variance, averaged over realizations.
    pub variance: Vec<Vec<f64>>,
    /// `realization_means[r][α][k]`.
    pub realization_means: Vec<Vec<Vec<f64>>>,
}

impl PopulationSeries {
    /// Standard error across realizations of the empirical mean (zero for one realization).
    pub fn mean_standard_error(&self, alpha: usize, k: usize) -> f64 {
        let r = self.realization_means.len();
        if r < 2 {
            return 0.0;
        }
        let m = self.mean[alpha][k];
        let ss: f64 = self.realization_means.iter().map(|rm| (rm[alpha][k] - m).powi(2)).sum();
        (ss / (r - 1) as f64 / r as f64).sqrt()
    }
}

/// Recorded times and `voltages[k][r][i]`.
pub type Trajectories = (Vec<f64>, Vec<Vec<Vec<f64>>>);

/// Recorded output of [`run_ensemble`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub population_sizes: Vec<usize>,
    /// Present unless the record mode is `final_state`.
    pub stats: Option<PopulationSeries>,
    /// `(times, voltages[k][r][i])` in `full_trajectories` mode.
    pub trajectories: Option<Trajectories>,
    pub final_state: EnsembleState,
}

struct RealizationRecord {
    final_v: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    snapshots: Vec<Vec<f64>>,
}

/// Bytes needed to keep every recorded potential of every realization.
pub fn full_trajectory_bytes(sim: &SimConfig) -> u64 {
    let records = sim.recorded_steps().len() as u64;
    records
        .saturating_mul(sim.n_realizations as u64)
        .saturating_mul(sim.n_total as u64)
        .saturating_mul(std::mem::size_of::<f64>() as u64)
}

fn run_realization(
    spec: &ModelSpec,
    layout: &Layout,
    sim: &SimConfig,
    init: &InitialLaw,
    realization: u64,
) -> Result<RealizationRecord> {
    let p = spec.n_populations();
    let n_steps = sim.n_steps();
    let mut v = initial_voltages(layout, init, sim.seed, realization);
    let keep_stats = sim.record_mode != RecordMode::FinalState;
    let keep_full = sim.record_mode == RecordMode::FullTrajectories;
    let mut rec = RealizationRecord {
        final_v: Vec::new(),
        means: vec![Vec::new(); p],
        variances: vec![Vec::new(); p],
        snapshots: Vec::new(),
    };
    let record = |step: usize, v: &[f64], rec: &mut RealizationRecord| {
        if !step.is_multiple_of(sim.record_every) && step != n_steps {
            return;
        }
        if keep_stats {
            for a in 0..p {
                let (m, var) = block_stats(&v[layout.range(a)]);
                rec.means[a].push(m);
                rec.variances[a].push(var);
            }
        }
        if keep_full {
            rec.snapshots.push(v.to_vec());
        }
    };
    record(0, &v, &mut rec);
    let (mut rates, mut drive) = (vec![0.0; p], vec![0.0; p]);
    for k in 0..n_steps {
        let t = k as f64 * sim.dt;
        let noise = StepNoise::new(sim.seed, realization, k as u64);
        population_rates(spec, layout, &v, &mut rates);
        network_drive(spec, t, &rates, &mut drive);
        if !advance(spec, layout, t, sim.dt, &drive, &mut v, |i| noise.normal(i as u64)) {
            return Err(Error::Diverged { step: k + 1, time: (k + 1) as f64 * sim.dt });
        }
        record(k + 1, &v, &mut rec);
    }
    rec.final_v = v;
    Ok(rec)
}

/// Simulates `R` independent realizations of the network.
///
/// Realizations run in parallel on the current rayon pool; their results are
/// combined in realization order, so the output is identical for any thread count.
pub fn run_ensemble(spec: &ModelSpec, sim: &SimConfig, init: &InitialLaw) -> Result<RunOutput> {
    spec.validate()?;
    sim.validate()?;
    init.validate(spec.n_populations())?;
    let layout = Layout::new(spec, sim.n_total)?;
    if sim.record_mode == RecordMode::FullTrajectories {
        let required = full_trajectory_bytes(sim);
        if required > sim.memory_cap_bytes {
            return Err(Error::MemoryCap { required, cap: sim.memory_cap_bytes });
        }
    }
    let records: Vec<RealizationRecord> = (0..sim.n_realizations)
        .into_par_iter()
        .map(|r| run_realization(spec, &layout, sim, init, r as u64))
        .collect::<Result<_>>()?;

    let times: Vec<f64> = sim.recorded_steps().iter().map(|&k| k as f64 * sim.dt).collect();
    let p = spec.n_populations();
    let r = records.len() as f64;
    let stats = (sim.record_mode != RecordMode::FinalState).then(|| {
        let avg = |pick: fn(&RealizationRecord) -> &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            (0..p)
                .map(|a| (0..times.len()).map(|k| records.iter().map(|rec| pick(rec)[a][k]).sum::<f64>() / r).collect())
                .collect()
        };
        PopulationSeries {
            times: times.clone(),
            mean: avg(|rec| &rec.means),
            variance: avg(|rec| &rec.variances),
            realization_means: records.iter().map(|rec| rec.means.clone()).collect(),
        }
    });
    let n_steps = sim.n_steps();
    let mut records = records;
    let trajectories = (sim.record_mode == RecordMode::FullTrajectories).then(|| {
        let per_time = (0..times.len()).map(|k| records.iter().map(|rec| rec.snapshots[k].clone()).collect()).collect();
        (times.clone(), per_time)
    });
    let final_state = EnsembleState {
        voltages: records.iter_mut().map(|rec| std::mem::take(&mut rec.final_v)).collect(),
        population_of: layout.population_of(),
        time: n_steps as f64 * sim.dt,
        step: n_steps as u64,
    };
    Ok(RunOutput { population_sizes: layout.sizes().to_vec(), stats, trajectories, final_state })
}

/// Network run paired with its mean-field companion.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledRun {
    pub n_total: usize,
    pub times: Vec<f64>,
    /// `sup_{s≤t} max_i |V^i_s − V̄^i_s|`, averaged over realizations, at each recorded time.
    pub mean_running_sup: Vec<f64>,
    /// Discrepancy over the whole horizon, one value per realization.
    pub sup_per_realization: Vec<f64>,
}

impl CoupledRun {
    /// Realization average of the full-horizon discrepancy.
    pub fn mean_sup(&self) -> f64 {
        self.sup_per_realization.iter().sum::<f64>() / self.sup_per_realization.len() as f64
    }

    pub fn standard_error(&self) -> f64 {
        let n = self.sup_per_realization.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean_sup();
        let ss: f64 = self.sup_per_realization.iter().map(|x| (x - m).powi(2)).sum();
        (ss / (n - 1) as f64 / n as f64).sqrt()
    }
}

/// Runs the network together with `N` independent copies of the mean-field
/// process, each driven by the same initial sample and Brownian increments as
/// its network neuron. The copies replace the empirical population rates by
/// their mean-field value `f_β(μ_β(t), v_β(t))`.
pub fn run_coupled(spec: &ModelSpec, sim: &SimConfig, init: &InitialLaw) -> Result<CoupledRun> {
    spec.validate()?;
    sim.validate()?;
    init.validate(spec.n_populations())?;
    let layout = Layout::new(spec, sim.n_total)?;
    let n_steps = sim.n_steps();
    let horizon = n_steps as f64 * sim.dt;
    let traj = moments::integrate(spec, &init.to_moment_state(), &OdeConfig::adaptive(horizon))?;
    let p = spec.n_populations();
    let mf_drive: Vec<Vec<f64>> = (0..n_steps)
        .map(|k| {
            let t = k as f64 * sim.dt;
            let s = traj.state_at(t)?;
            let rates: Vec<f64> =
                spec.populations.iter().enumerate().map(|(b, q)| q.mean_rate(s.mean[b], s.variance[b])).collect();
            let mut drive = vec![0.0; p];
            network_drive(spec, t, &rates, &mut drive);
            Ok(drive)
        })
        .collect::<Result<_>>()?;

    let recorded = sim.recorded_steps();
    let paths: Vec<Vec<f64>> = (0..sim.n_realizations)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let r = r as u64;
            let mut v = initial_voltages(&layout, init, sim.seed, r);
            let mut w = v.clone();
            let (mut rates, mut drive) = (vec![0.0; p], vec![0.0; p]);
            let mut sup = 0.0f64;
            let mut path = Vec::with_capacity(recorded.len());
            let mut next = 0;
            if recorded[0] == 0 {
                path.push(0.0);
                next = 1;
            }
            for (k, mf_drive_k) in mf_drive.iter().enumerate().take(n_steps) {
                let t = k as f64 * sim.dt;
                let noise = StepNoise::new(sim.seed, r, k as u64);
                population_rates(spec, &layout, &v, &mut rates);
                network_drive(spec, t, &rates, &mut drive);
                let ok_v = advance(spec, &layout, t, sim.dt, &drive, &mut v, |i| noise.normal(i as u64));
                let ok_w = advance(spec, &layout, t, sim.dt, mf_drive_k, &mut w, |i| noise.normal(i as u64));
                if !(ok_v && ok_w) {
                    return Err(Error::Diverged { step: k + 1, time: (k + 1) as f64 * sim.dt });
                }
                let gap = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                sup = sup.max(gap);
                if next < recorded.len() && recorded[next] == k + 1 {
                    path.push(sup);
                    next += 1;
                }
            }
            Ok(path)
        })
        .collect::<Result<_>>()?;

    let r = paths.len() as f64;
    let mean_running_sup = (0..recorded.len()).map(|k| paths.iter().map(|p| p[k]).sum::<f64>() / r).collect();
    Ok(CoupledRun {
        n_total: sim.n_total,
        times: recorded.iter().map(|&k| k as f64 * sim.dt).collect(),
        mean_running_sup,
        sup_per_realization: paths.iter().map(|p| *p.last().unwrap()).collect(),
    })
}

/// Jacobian of the noiseless network vector field at `v`.
pub fn network_jacobian(spec: &ModelSpec, layout: &Layout, v: &[f64]) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = layout.n_total();
    if v.len() != n {
        return Err(Error::InvalidConfig(format!("expected {n} potentials, got {}", v.len())));
    }
    let population_of = layout.population_of();
    let slopes: Vec<f64> =
        v.iter().zip(&population_of).map(|(&x, &b)| spec.populations[b].mean_rate_slope(x, 0.0)).collect();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let (a, b) = (population_of[i], population_of[j]);
        let coupling = spec.connectivity[a][b] / layout.sizes()[b] as f64 * slopes[j];
        if i == j {
            coupling - 1.0 / spec.populations[a].tau
        } else {
            coupling
        }
    }))
}
