use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Complex, DVector};
use serde::{Deserialize, Serialize};

use super::{classify, eigenvalues, mean_field, mean_jacobian, Stability};
use crate::error::Result;
use crate::model::{ModelSpec, MomentState};
use crate::moments::{self, OdeConfig};

const RESIDUAL_TOL: f64 = 1e-12;
const MAX_NEWTON: usize = 100;
const MERGE_DISTANCE: f64 = 1e-7;
/// Eigenvalue magnitude below which an equilibrium is flagged as near a bifurcation.
const NEAR_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumRecord {
    pub parameter_point: BTreeMap<String, f64>,
    pub mu_star: Vec<f64>,
    pub jacobian: Vec<Vec<f64>>,
    /// `[re, im]` pairs sorted by real part.
    pub eigenvalues: Vec<[f64; 2]>,
    pub stability: Stability,
    pub near_saddle_node: bool,
    pub near_hopf: bool,
}

impl EquilibriumRecord {
    pub(crate) fn build(spec: &ModelSpec, mu: Vec<f64>) -> Self {
        let jac = mean_jacobian(spec, &mu);
        let eig = eigenvalues(&jac);
        let near_saddle_node = eig.iter().any(|e| e.im.abs() < 1e-12 && e.re.abs() < NEAR_TOL);
        let near_hopf = eig.iter().any(|e| e.im.abs() >= 1e-12 && e.re.abs() < NEAR_TOL);
        EquilibriumRecord {
            parameter_point: BTreeMap::new(),
            jacobian: jac.row_iter().map(|r| r.iter().copied().collect()).collect(),
            stability: classify(&eig),
            eigenvalues: eig.iter().map(|e| [e.re, e.im]).collect(),
            mu_star: mu,
            near_saddle_node,
            near_hopf,
        }
    }

    pub fn complex_eigenvalues(&self) -> Vec<Complex<f64>> {
        self.eigenvalues.iter().map(|e| Complex::new(e[0], e[1])).collect()
    }

    /// True when the linearization has a non-real eigenvalue pair.
    pub fn is_focus(&self) -> bool {
        self.eigenvalues.iter().any(|e| e[1].abs() >= 1e-12)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSeed {
    pub seed: Vec<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSet {
    pub equilibria: Vec<EquilibriumRecord>,
    pub skipped: Vec<SkippedSeed>,
}

impl EquilibriumSet {
    pub fn stable(&self) -> impl Iterator<Item = &EquilibriumRecord> {
        self.equilibria.iter().filter(|e| e.stability == Stability::Stable)
    }
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton iteration on `F(μ) = 0`.
pub(crate) fn newton(spec: &ModelSpec, seed: &[f64]) -> std::result::Result<Vec<f64>, String> {
    let mut mu = seed.to_vec();
    let mut r = mean_field(spec, &mu);
    for _ in 0..MAX_NEWTON {
        let res = norm_inf(&r);
        if res < RESIDUAL_TOL {
            return Ok(mu);
        }
        let jac = mean_jacobian(spec, &mu);
        let rhs = -DVector::from_column_slice(&r);
        let Some(dx) = jac.lu().solve(&rhs) else {
            return Err("singular Jacobian".into());
        };
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = mu.iter().zip(dx.iter()).map(|(m, d)| m + alpha * d).collect();
            let rt = mean_field(spec, &trial);
            if norm_inf(&rt) < res || alpha < 1e-6 {
                mu = trial;
                r = rt;
                break;
            }
            alpha *= 0.5;
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return Err("iterate became non-finite".into());
        }
    }
    if norm_inf(&r) < RESIDUAL_TOL {
        Ok(mu)
    } else {
        Err(format!("no convergence in {MAX_NEWTON} iterations (residual {:.3e})", norm_inf(&r)))
    }
}

/// Newton from every seed; roots closer than `1e-7` are merged.
pub fn find_equilibria(spec: &ModelSpec, seeds: &[Vec<f64>]) -> Result<EquilibriumSet> {
    spec.validate()?;
    let p = spec.n_populations();
    let mut roots: Vec<Vec<f64>> = Vec::new();
    let mut skipped = Vec::new();
    for seed in seeds {
        if seed.len() != p {
            skipped.push(SkippedSeed { seed: seed.clone(), reason: format!("seed must have {p} components") });
            continue;
        }
        match newton(spec, seed) {
            Ok(mu) => {
                let dup = roots
                    .iter()
                    .any(|r| norm_inf(&r.iter().zip(&mu).map(|(a, b)| a - b).collect::<Vec<_>>()) < MERGE_DISTANCE);
                if !dup {
                    roots.push(mu);
                }
            }
            Err(reason) => skipped.push(SkippedSeed { seed: seed.clone(), reason }),
        }
    }
    roots.sort_by(|a, b| {
        a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(EquilibriumSet { equilibria: roots.into_iter().map(|mu| EquilibriumRecord::build(spec, mu)).collect(), skipped })
}

/// Box that contains every equilibrium: since `f ∈ (0, 1)`,
/// `μ_α = τ_α (Σ_β J_αβ f_β + I_α)` lies between the sums of the negative and
/// positive weights.
pub(crate) fn equilibrium_box(spec: &ModelSpec) -> Vec<(f64, f64)> {
    spec.populations
        .iter()
        .zip(&spec.connectivity)
        .map(|(pop, row)| {
            let neg: f64 = row.iter().filter(|w| **w < 0.0).sum();
            let pos: f64 = row.iter().filter(|w| **w > 0.0).sum();
            let i = pop.input.final_value();
            (pop.tau * (i + neg), pop.tau * (i + pos))
        })
        .collect()
}

fn lattice(ranges: &[(f64, f64)], per_axis: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for &(lo, hi) in ranges {
        let pts: Vec<f64> = if per_axis == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..per_axis).map(|k| lo + (hi - lo) * k as f64 / (per_axis - 1) as f64).collect()
        };
        out = out
            .into_iter()
            .flat_map(|prefix| {
                pts.iter().map(move |&x| {
                    let mut v = prefix.clone();
                    v.push(x);
                    v
                })
            })
            .collect();
    }
    out
}

/// Seeds for [`find_equilibria`]: a 5-point-per-axis lattice over
/// `[−10, 10]^P`, a finer lattice over the box that must contain every
/// equilibrium, and the endpoints of short mean-field runs from the coarse lattice.
pub fn default_seeds(spec: &ModelSpec) -> Vec<Vec<f64>> {
    let p = spec.n_populations();
    let mut seeds = lattice(&vec![(-10.0, 10.0); p], 5);
    let fine = match p {
        1 => 41,
        2 => 13,
        3 => 5,
        _ => 0,
    };
    if fine > 0 {
        seeds.extend(lattice(&equilibrium_box(spec), fine));
    }
    let v = crate::model::stationary_variance(spec);
    let coarse = lattice(&vec![(-10.0, 10.0); p], 5);
    for start in coarse {
        let init = MomentState::new(0.0, start, v.clone());
        if let Ok(traj) = moments::integrate(spec, &init, &OdeConfig::adaptive(50.0)) {
            seeds.push(traj.last().mean.clone());
        }
    }
    seeds
}

/// Gain at which the null solution of the one-population system loses
/// stability, `√(2π)/√(J²τ² − πτλ²)`; `None` when noise (or inhibition) keeps it stable.
pub fn pitchfork_threshold(coupling: f64, noise: f64, tau: f64) -> Option<f64> {
    let denom = coupling * coupling * tau * tau - PI * tau * noise * noise;
    (coupling > 0.0 && denom > 0.0).then(|| (2.0 * PI).sqrt() / denom.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfThreshold {
    pub gain: f64,
    /// Angular frequency of the critical pair at threshold.
    pub omega: f64,
}

/// Hopf threshold of the symmetric excitatory/inhibitory pair
/// ([`ModelSpec::hopf_pair`]): at the origin the linearization has the pair
/// `−1 + k(1 ± i)` with `k = gJ/√(2π(1 + g²λ²/2))`, which crosses when `k = 1`.
pub fn hopf_threshold_2pop(coupling: f64, noise: f64) -> Option<HopfThreshold> {
    let gain = pitchfork_threshold(coupling, noise, 1.0)?;
    let omega = gain * coupling / (2.0 * PI * (1.0 + gain * gain * noise * noise / 2.0)).sqrt();
    Some(HopfThreshold { gain, omega })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds() {
        let gc = (2.0 * PI).sqrt();
        assert!((pitchfork_threshold(1.0, 0.0, 1.0).unwrap() - gc).abs() < 1e-15);
        assert!((pitchfork_threshold(1.0, 0.4, 1.0).unwrap() - 3.554).abs() < 1e-3);
        assert_eq!(pitchfork_threshold(1.0, 0.8, 1.0), None);
        assert_eq!(pitchfork_threshold(-1.0, 0.0, 1.0), None);
        let h = hopf_threshold_2pop(1.0, 0.3).unwrap();
        assert!((h.omega - 1.0).abs() < 1e-12);
    }

    #[test]
    fn origin_is_equilibrium_of_symmetric_systems() {
        let spec = ModelSpec::one_population(1.0, 2.0, 0.4);
        let set = find_equilibria(&spec, &[vec![0.3]]).unwrap();
        assert_eq!(set.equilibria.len(), 1);
        assert!(set.equilibria[0].mu_star[0].abs() < 1e-12);
        let spec = ModelSpec::hopf_pair(1.0, 1.5, 0.7);
        let set = find_equilibria(&spec, &default_seeds(&spec)).unwrap();
        assert!(set.equilibria.iter().any(|e| e.mu_star.iter().all(|m| m.abs() < 1e-10)));
    }

    #[test]
    fn three_equilibria_without_noise() {
        let spec = ModelSpec::excitatory_inhibitory(1.0, 0.0, 0.0, -3.0);
        let set = find_equilibria(&spec, &default_seeds(&spec)).unwrap();
        let kinds: Vec<Stability> = set.equilibria.iter().map(|e| e.stability).collect();
        assert_eq!(set.equilibria.len(), 3, "{:?}", set.equilibria);
        assert!(kinds.contains(&Stability::Stable));
        assert!(kinds.contains(&Stability::Unstable));
        assert!(kinds.contains(&Stability::Saddle));
        for e in &set.equilibria {
            assert!(norm_inf(&mean_field(&spec, &e.mu_star)) < 1e-10);
        }
    }

    #[test]
    fn bounding_box_contains_equilibria() {
        let spec = ModelSpec::excitatory_inhibitory(1.0, 1.0, 0.0, -3.0);
        let bx = equilibrium_box(&spec);
        let set = find_equilibria(&spec, &default_seeds(&spec)).unwrap();
        for e in &set.equilibria {
            for (m, (lo, hi)) in e.mu_star.iter().zip(&bx) {
                assert!(m >= lo && m <= hi);
            }
        }
    }
}
