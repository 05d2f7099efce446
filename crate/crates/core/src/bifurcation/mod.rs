//! Equilibria, bifurcations and attractors of the mean dynamics.
//!
//! Once the variance has relaxed to `v = τλ²/2` the means obey the autonomous
//! system
//!
//! ```text
//! μ̇ = F(μ) = −μ/τ + J·f(μ, v) + I
//! ```
//!
//! whose Jacobian `−diag(1/τ) + J·diag(∂f/∂μ)` is assembled from
//! [`crate::model::closure_f_dmu`]. Noise enters only through the effective
//! slope `g/√(1 + g²v)`, which is how it moves and destroys bifurcations.

mod census;
mod codim2;
mod continuation;
mod curve;
mod cycles;
mod equilibria;
mod portrait;

use std::collections::BTreeMap;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::model::{stationary_variance, ModelSpec, Parameter};

pub(crate) use census::parameter_name;
pub use census::{attractor_census, AttractorLabel, Boundary, CensusOptions, SweepAxis, SweepCell, SweepResult};
pub use codim2::{find_codim2, homoclinic_turning_point, Codim2Options, HomoclinicOptions, SearchBox};
pub use continuation::{continue_equilibria, Branch, BranchPoint, ContinuationOptions, ContinuationResult};
pub use cycles::{characterize_cycle, cycle_onset, CycleOptions, CycleReport};
pub use equilibria::{
    default_seeds, find_equilibria, hopf_threshold_2pop, pitchfork_threshold, EquilibriumRecord, EquilibriumSet,
    HopfThreshold, SkippedSeed,
};
pub use portrait::{phase_portrait, Manifold, ManifoldKind, Nullcline, PhasePortrait, PortraitBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Saddle,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BifurcationKind {
    SaddleNode,
    Pitchfork,
    Hopf,
    BogdanovTakens,
    Cusp,
    HopfTurningPoint,
    HomoclinicEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationPoint {
    pub kind: BifurcationKind,
    pub parameters: BTreeMap<String, f64>,
    pub state: Vec<f64>,
    /// Kind-specific extras such as `omega` (angular frequency) or `tolerance`.
    #[serde(default)]
    pub auxiliary: BTreeMap<String, f64>,
}

impl BifurcationPoint {
    pub fn parameter(&self, name: &str) -> Option<f64> {
        self.parameters.get(name).copied()
    }
}

/// `F(μ)` with every variance at its stationary value and inputs at their final value.
pub fn mean_field(spec: &ModelSpec, mu: &[f64]) -> Vec<f64> {
    let v = stationary_variance(spec);
    spec.populations
        .iter()
        .enumerate()
        .map(|(a, pop)| {
            let coupling: f64 = spec.connectivity[a]
                .iter()
                .zip(&spec.populations)
                .enumerate()
                .map(|(b, (w, q))| w * q.mean_rate(mu[b], v[b]))
                .sum();
            -mu[a] / pop.tau + coupling + pop.input.final_value()
        })
        .collect()
}

/// Analytic Jacobian of [`mean_field`].
pub fn mean_jacobian(spec: &ModelSpec, mu: &[f64]) -> DMatrix<f64> {
    let v = stationary_variance(spec);
    let slopes: Vec<f64> = spec.populations.iter().enumerate().map(|(b, q)| q.mean_rate_slope(mu[b], v[b])).collect();
    let p = spec.n_populations();
    DMatrix::from_fn(p, p, |a, b| {
        let diag = if a == b { -1.0 / spec.populations[a].tau } else { 0.0 };
        diag + spec.connectivity[a][b] * slopes[b]
    })
}

pub(crate) fn eigenvalues(jac: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut eig: Vec<Complex<f64>> = jac.complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    eig
}

pub(crate) fn classify(eig: &[Complex<f64>]) -> Stability {
    let negative = eig.iter().filter(|e| e.re < 0.0).count();
    if negative == eig.len() {
        Stability::Stable
    } else if negative == 0 {
        Stability::Unstable
    } else {
        Stability::Saddle
    }
}

/// `Re Π_{i<j} (λ_i + λ_j)`: vanishes when a complex pair crosses the
/// imaginary axis (and at neutral saddles). Equals the trace for `P = 2`.
pub(crate) fn hopf_test(jac: &DMatrix<f64>) -> f64 {
    let p = jac.nrows();
    if p == 2 {
        return jac.trace();
    }
    let eig = eigenvalues(jac);
    let mut prod = Complex::new(1.0, 0.0);
    for i in 0..p {
        for j in i + 1..p {
            prod *= eig[i] + eig[j];
        }
    }
    prod.re
}

/// A model with some parameters left free; points are `[μ_1..μ_P, p_1..p_k]`.
#[derive(Debug, Clone)]
pub(crate) struct Family {
    pub base: ModelSpec,
    pub params: Vec<Parameter>,
}

impl Family {
    pub fn new(base: &ModelSpec, params: Vec<Parameter>) -> Self {
        Family { base: base.clone(), params }
    }

    pub fn p(&self) -> usize {
        self.base.n_populations()
    }

    pub fn spec(&self, values: &[f64]) -> ModelSpec {
        self.params.iter().zip(values).fold(self.base.clone(), |s, (par, &x)| par.apply(&s, x))
    }

    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        x.split_at(self.p())
    }

    pub fn field(&self, x: &[f64]) -> Vec<f64> {
        let (mu, pars) = self.split(x);
        mean_field(&self.spec(pars), mu)
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let (mu, pars) = self.split(x);
        mean_jacobian(&self.spec(pars), mu)
    }

    pub fn parameter_map(&self, x: &[f64]) -> BTreeMap<String, f64> {
        let (_, pars) = self.split(x);
        self.params.iter().zip(pars).map(|(p, v)| (p.to_string(), *v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let specs = [
            ModelSpec::one_population(1.0, 3.0, 0.4),
            ModelSpec::hopf_pair(1.2, 2.0, 0.3),
            ModelSpec::excitatory_inhibitory(1.0, 1.2, 0.5, -3.0),
        ];
        let mut state = 0x1234_5678u64;
        let mut unif = || {
            state = crate::rng::mix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for spec in &specs {
            let p = spec.n_populations();
            for _ in 0..20 {
                let mu: Vec<f64> = (0..p).map(|_| 10.0 * unif() - 5.0).collect();
                let jac = mean_jacobian(spec, &mu);
                for b in 0..p {
                    let h = 1e-6;
                    let (mut up, mut dn) = (mu.clone(), mu.clone());
                    up[b] += h;
                    dn[b] -= h;
                    let (fu, fd) = (mean_field(spec, &up), mean_field(spec, &dn));
                    for a in 0..p {
                        let fdiff = (fu[a] - fd[a]) / (2.0 * h);
                        let scale = jac[(a, b)].abs().max(1e-3);
                        assert!((fdiff - jac[(a, b)]).abs() / scale < 1e-5, "{fdiff} vs {}", jac[(a, b)]);
                    }
                }
            }
        }
    }

    #[test]
    fn stability_classes() {
        let c = |re: f64, im: f64| Complex::new(re, im);
        assert_eq!(classify(&[c(-1.0, 0.0), c(-0.1, 0.0)]), Stability::Stable);
        assert_eq!(classify(&[c(-1.0, 0.0), c(0.1, 0.0)]), Stability::Saddle);
        assert_eq!(classify(&[c(0.2, 1.0), c(0.2, -1.0)]), Stability::Unstable);
    }
}
