use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cycles::{characterize_cycle, CycleOptions, CycleReport};
use super::equilibria::{default_seeds, equilibrium_box, find_equilibria};
use super::{BifurcationPoint, Stability};
use crate::error::{Error, Result};
use crate::model::{stationary_variance, ModelSpec, MomentState, Parameter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttractorLabel {
    LowFp,
    HighFp,
    Oscillation,
    BistableFp,
    FpPlusCycle,
    Other,
    Unresolved,
}

impl AttractorLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttractorLabel::LowFp => "low_fp",
            AttractorLabel::HighFp => "high_fp",
            AttractorLabel::Oscillation => "oscillation",
            AttractorLabel::BistableFp => "bistable_fp",
            AttractorLabel::FpPlusCycle => "fp_plus_cycle",
            AttractorLabel::Other => "other",
            AttractorLabel::Unresolved => "unresolved",
        }
    }

    /// Exactly one attractor, and it is a fixed point.
    pub fn is_single_fixed_point(&self) -> bool {
        matches!(self, AttractorLabel::LowFp | AttractorLabel::HighFp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    #[serde(with = "parameter_name")]
    pub parameter: Parameter,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl SweepAxis {
    pub fn new(parameter: Parameter, min: f64, max: f64, count: usize) -> Self {
        SweepAxis { parameter, min, max, count }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        (0..self.count).map(|k| self.min + (self.max - self.min) * k as f64 / (self.count - 1) as f64).collect()
    }
}

pub(crate) mod parameter_name {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::model::Parameter;

    pub fn serialize<S: Serializer>(p: &Parameter, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&p.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Parameter, D::Error> {
        let name = String::deserialize(d)?;
        name.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusOptions {
    pub cycle: CycleOptions,
    /// Bisection steps used to refine each boundary between differing cells.
    pub refine_steps: usize,
    /// Lattice points per axis added to the initial conditions.
    pub init_lattice: usize,
    /// Excitatory rate separating low from high fixed points.
    pub high_rate_threshold: f64,
}

impl Default for CensusOptions {
    fn default() -> Self {
        CensusOptions { cycle: CycleOptions::default(), refine_steps: 2, init_lattice: 3, high_rate_threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub params: Vec<f64>,
    pub label: AttractorLabel,
    pub stable_fixed_points: Vec<Vec<f64>>,
    pub cycle_periods: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    /// Which axis the boundary was refined along.
    pub axis: usize,
    pub location: Vec<f64>,
    /// Width of the final bisection bracket.
    pub resolution: f64,
    pub from: AttractorLabel,
    pub to: AttractorLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axes: Vec<SweepAxis>,
    pub cells: Vec<SweepCell>,
    pub boundaries: Vec<Boundary>,
    #[serde(default)]
    pub bifurcations: Vec<BifurcationPoint>,
}

impl SweepResult {
    /// Labels in grid order along the first axis (for one-axis sweeps).
    pub fn labels(&self) -> Vec<AttractorLabel> {
        self.cells.iter().map(|c| c.label).collect()
    }
}

fn initial_conditions(spec: &ModelSpec, fixed: &[Vec<f64>], per_axis: usize) -> Vec<Vec<f64>> {
    let mut inits = Vec::new();
    for mu in fixed {
        for a in 0..mu.len() {
            for s in [-1.0, 1.0] {
                let mut x = mu.clone();
                x[a] += s * 1e-2;
                inits.push(x);
            }
        }
    }
    let bx = equilibrium_box(spec);
    let mut lattice = vec![Vec::new()];
    for (lo, hi) in bx {
        let pts: Vec<f64> = (0..per_axis).map(|k| lo + (hi - lo) * (k as f64 + 0.5) / per_axis as f64).collect();
        lattice = lattice
            .into_iter()
            .flat_map(|prefix: Vec<f64>| {
                pts.iter().map(move |&x| {
                    let mut v = prefix.clone();
                    v.push(x);
                    v
                })
            })
            .collect();
    }
    inits.extend(lattice);
    inits
}

/// Classifies the attractors of one parameter point.
pub(crate) fn classify_point(spec: &ModelSpec, opts: &CensusOptions) -> Result<SweepCell> {
    let set = find_equilibria(spec, &default_seeds(spec))?;
    let stable: Vec<Vec<f64>> = set.stable().map(|e| e.mu_star.clone()).collect();
    let others: Vec<Vec<f64>> =
        set.equilibria.iter().filter(|e| e.stability != Stability::Stable).map(|e| e.mu_star.clone()).collect();
    let v = stationary_variance(spec);
    let mut periods: Vec<f64> = Vec::new();
    let mut unresolved = false;
    for init in initial_conditions(spec, &others, opts.init_lattice) {
        let state = MomentState::new(0.0, init, v.clone());
        match characterize_cycle(spec, &state, &opts.cycle)? {
            CycleReport::Cycle { period, .. } => {
                if !periods.iter().any(|p| (p - period).abs() < 1e-2 * period) {
                    periods.push(period);
                }
            }
            CycleReport::Unresolved { .. } => unresolved = true,
            CycleReport::None { .. } => {}
        }
    }
    let label = if unresolved {
        AttractorLabel::Unresolved
    } else {
        match (stable.len(), periods.len()) {
            (1, 0) => {
                let e = &spec.populations[0];
                let rate = e.mean_rate(stable[0][0], v[0]);
                if rate > opts.high_rate_threshold {
                    AttractorLabel::HighFp
                } else {
                    AttractorLabel::LowFp
                }
            }
            (2, 0) => AttractorLabel::BistableFp,
            (0, c) if c > 0 => AttractorLabel::Oscillation,
            (f, c) if f > 0 && c > 0 => AttractorLabel::FpPlusCycle,
            _ => AttractorLabel::Other,
        }
    };
    Ok(SweepCell { params: Vec::new(), label, stable_fixed_points: stable, cycle_periods: periods })
}

fn spec_at(spec: &ModelSpec, axes: &[SweepAxis], params: &[f64]) -> ModelSpec {
    axes.iter().zip(params).fold(spec.clone(), |s, (ax, &x)| ax.parameter.apply(&s, x))
}

fn label_at(spec: &ModelSpec, axes: &[SweepAxis], params: &[f64], opts: &CensusOptions) -> Result<AttractorLabel> {
    Ok(classify_point(&spec_at(spec, axes, params), opts)?.label)
}

/// Attractor census over a one- or two-axis grid. Boundaries between
/// neighbouring cells with different labels are refined by bisection.
pub fn attractor_census(spec: &ModelSpec, axes: &[SweepAxis], opts: &CensusOptions) -> Result<SweepResult> {
    if axes.is_empty() || axes.len() > 2 {
        return Err(Error::InvalidConfig("a census takes one or two axes".into()));
    }
    if axes.iter().any(|a| a.count == 0 || !(a.min <= a.max)) {
        return Err(Error::InvalidConfig("every axis needs count ≥ 1 and min ≤ max".into()));
    }
    spec.validate()?;
    let grids: Vec<Vec<f64>> = axes.iter().map(SweepAxis::values).collect();
    let points: Vec<Vec<f64>> = match grids.len() {
        1 => grids[0].iter().map(|&x| vec![x]).collect(),
        _ => grids[1].iter().flat_map(|&y| grids[0].iter().map(move |&x| vec![x, y])).collect(),
    };
    let cells: Vec<SweepCell> = points
        .par_iter()
        .map(|pt| {
            let mut cell = classify_point(&spec_at(spec, axes, pt), opts)?;
            cell.params = pt.clone();
            Ok(cell)
        })
        .collect::<Result<_>>()?;

    let n0 = grids[0].len();
    let index = |i: usize, j: usize| j * n0 + i;
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    let n1 = if grids.len() == 2 { grids[1].len() } else { 1 };
    for j in 0..n1 {
        for i in 0..n0 {
            if i + 1 < n0 {
                pairs.push((0, index(i, j), index(i + 1, j)));
            }
            if j + 1 < n1 {
                pairs.push((1, index(i, j), index(i, j + 1)));
            }
        }
    }
    let boundaries: Vec<Boundary> = pairs
        .par_iter()
        .filter(|(_, a, b)| cells[*a].label != cells[*b].label)
        .map(|&(axis, a, b)| {
            let (mut lo, mut hi) = (cells[a].params.clone(), cells[b].params.clone());
            let (from, to) = (cells[a].label, cells[b].label);
            let mut lo_label = from;
            for _ in 0..opts.refine_steps {
                let mut mid = lo.clone();
                mid[axis] = 0.5 * (lo[axis] + hi[axis]);
                let l = label_at(spec, axes, &mid, opts)?;
                if l == lo_label {
                    lo = mid;
                    lo_label = l;
                } else {
                    hi = mid;
                }
            }
            let mut location = lo.clone();
            location[axis] = 0.5 * (lo[axis] + hi[axis]);
            Ok(Boundary { axis, location, resolution: (hi[axis] - lo[axis]).abs(), from, to })
        })
        .collect::<Result<_>>()?;
    Ok(SweepResult { axes: axes.to_vec(), cells, boundaries, bifurcations: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_grid() {
        let spec = ModelSpec::excitatory_inhibitory(1.0, 4.0, 0.0, -3.0);
        let res = attractor_census(&spec, &[SweepAxis::new(Parameter::Noise, 4.0, 4.0, 1)], &CensusOptions::default())
            .unwrap();
        assert_eq!(res.cells.len(), 1);
        assert!(res.boundaries.is_empty());
        assert!(res.cells[0].label.is_single_fixed_point());
    }

    #[test]
    fn axis_json_uses_parameter_names() {
        let ax = SweepAxis::new(Parameter::Input(0), -1.0, 1.0, 3);
        let json = serde_json::to_string(&ax).unwrap();
        assert!(json.contains("\"I1\""));
        assert_eq!(serde_json::from_str::<SweepAxis>(&json).unwrap(), ax);
        assert_eq!(ax.values(), vec![-1.0, 0.0, 1.0]);
    }
}
