use serde::{Deserialize, Serialize};

use super::curve::{self, CurvePoint, TraceOptions};
use super::equilibria::{default_seeds, find_equilibria};
use super::{classify, eigenvalues, hopf_test, BifurcationKind, BifurcationPoint, Family, Stability};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, Parameter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationOptions {
    /// Largest arclength step.
    pub step: f64,
    pub max_steps: usize,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions { step: 0.05, max_steps: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub param: f64,
    pub mu: Vec<f64>,
    pub stability: Stability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub parameter: String,
    pub points: Vec<BranchPoint>,
    /// Step budget exhausted (or step size underflow) before leaving the range.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationResult {
    pub branches: Vec<Branch>,
    pub bifurcations: Vec<BifurcationPoint>,
}

impl ContinuationResult {
    pub fn of_kind(&self, kind: BifurcationKind) -> impl Iterator<Item = &BifurcationPoint> {
        self.bifurcations.iter().filter(move |b| b.kind == kind)
    }
}

const CORRECTOR_TOL: f64 = 1e-11;

fn det_of(family: &Family, x: &[f64]) -> f64 {
    family.jacobian(x).determinant()
}

/// Odd symmetry of the field about `x` along the kernel direction: a
/// pitchfork rather than a fold.
fn is_symmetric(family: &Family, x: &[f64]) -> bool {
    let p = family.p();
    let jac = family.jacobian(x);
    let svd = jac.svd(false, true);
    let Some(v_t) = svd.v_t else { return false };
    let k = svd.singular_values.imin();
    let delta = 1e-3;
    let shifted = |s: f64| -> Vec<f64> {
        let mut y = x.to_vec();
        for a in 0..p {
            y[a] += s * delta * v_t[(k, a)];
        }
        family.field(&y)
    };
    let (up, dn) = (shifted(1.0), shifted(-1.0));
    up.iter().zip(&dn).all(|(a, b)| (a + b).abs() < 1e-10)
}

/// Scans consecutive curve points for det and Hopf-test sign changes.
fn detect(family: &Family, points: &[CurvePoint], out: &mut Vec<BifurcationPoint>) {
    let g = |x: &[f64]| family.field(x);
    for w in points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let (da, db) = (det_of(family, &a.x), det_of(family, &b.x));
        if (da > 0.0) != (db > 0.0) {
            if let Some(x) = curve::locate(&g, a, b, |x| det_of(family, x), CORRECTOR_TOL) {
                // A branch bending through a pitchfork also sees a det sign change there.
                let kind =
                    if is_symmetric(family, &x) { BifurcationKind::Pitchfork } else { BifurcationKind::SaddleNode };
                out.push(point(family, kind, &x));
            }
        }
        let (ha, hb) = (hopf_test(&family.jacobian(&a.x)), hopf_test(&family.jacobian(&b.x)));
        if (ha > 0.0) != (hb > 0.0) {
            if let Some(x) = curve::locate(&g, a, b, |x| hopf_test(&family.jacobian(x)), CORRECTOR_TOL) {
                let eig = eigenvalues(&family.jacobian(&x));
                let pair = eig.iter().find(|e| e.im > 1e-8 && e.re.abs() < 1e-6);
                if let Some(e) = pair {
                    let mut bp = point(family, BifurcationKind::Hopf, &x);
                    bp.auxiliary.insert("omega".into(), e.im);
                    bp.auxiliary.insert("frequency".into(), e.im / (2.0 * std::f64::consts::PI));
                    out.push(bp);
                }
            }
        }
    }
}

pub(crate) fn point(family: &Family, kind: BifurcationKind, x: &[f64]) -> BifurcationPoint {
    BifurcationPoint {
        kind,
        parameters: family.parameter_map(x),
        state: x[..family.p()].to_vec(),
        auxiliary: Default::default(),
    }
}

pub(crate) fn dedup(points: &mut Vec<BifurcationPoint>, tol: f64) {
    let mut kept: Vec<BifurcationPoint> = Vec::new();
    for bp in points.drain(..) {
        let same = kept.iter().any(|k| {
            k.kind == bp.kind
                && k.state.iter().zip(&bp.state).all(|(a, b)| (a - b).abs() < tol)
                && k.parameters.iter().all(|(name, v)| bp.parameters.get(name).is_some_and(|w| (v - w).abs() < tol))
        });
        if !same {
            kept.push(bp);
        }
    }
    *points = kept;
}

/// Follows every equilibrium branch crossing the parameter range and reports
/// folds, pitchforks and Hopf points met along the way.
///
/// Branches are traced by pseudo-arclength continuation, so they pass around
/// folds. They start from the equilibria found at both ends of the range.
pub fn continue_equilibria(
    spec: &ModelSpec,
    parameter: Parameter,
    range: (f64, f64),
    opts: &ContinuationOptions,
) -> Result<ContinuationResult> {
    let (lo, hi) = range;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidConfig(format!("continuation range must satisfy lo < hi, got {range:?}")));
    }
    if !(opts.step > 0.0) {
        return Err(Error::InvalidConfig("continuation step must be positive".into()));
    }
    spec.validate()?;
    let family = Family::new(spec, vec![parameter]);
    let p = family.p();
    let g = |x: &[f64]| family.field(x);
    let trace_opts = TraceOptions {
        h0: opts.step / 4.0,
        h_min: 1e-9,
        h_max: opts.step,
        max_steps: opts.max_steps,
        bounds: vec![(p, lo, hi)],
        tol: CORRECTOR_TOL,
    };

    let mut branches = Vec::new();
    let mut bifurcations = Vec::new();
    let mut traced: Vec<Vec<CurvePoint>> = Vec::new();
    for (end, direction) in [(lo, 1.0), (hi, -1.0)] {
        let at_end = parameter.apply(spec, end);
        let set = find_equilibria(&at_end, &default_seeds(&at_end))?;
        for eq in set.equilibria {
            let mut start = eq.mu_star.clone();
            start.push(end);
            let covered =
                traced.iter().flatten().any(|cp| cp.x.iter().zip(&start).all(|(a, b)| (a - b).abs() < 2.0 * opts.step));
            if covered {
                continue;
            }
            let mut initial = vec![0.0; p + 1];
            initial[p] = direction;
            let curve = curve::trace(&g, &start, &initial, &trace_opts);
            detect(&family, &curve.points, &mut bifurcations);
            branches.push(Branch {
                parameter: parameter.to_string(),
                points: curve
                    .points
                    .iter()
                    .map(|cp| BranchPoint {
                        param: cp.x[p],
                        mu: cp.x[..p].to_vec(),
                        stability: classify(&eigenvalues(&family.jacobian(&cp.x))),
                    })
                    .collect(),
                truncated: curve.truncated,
            });
            traced.push(curve.points);
        }
    }
    dedup(&mut bifurcations, 1e-6);
    let key = |bp: &BifurcationPoint| bp.parameters.values().next().copied().unwrap_or(0.0);
    bifurcations.sort_by(|a, b| key(a).total_cmp(&key(b)));
    Ok(ContinuationResult { branches, bifurcations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bifurcation::pitchfork_threshold;

    #[test]
    fn pitchfork_in_gain() {
        for (lambda, expected) in
            [(0.0, (2.0 * std::f64::consts::PI).sqrt()), (0.4, pitchfork_threshold(1.0, 0.4, 1.0).unwrap())]
        {
            let spec = ModelSpec::one_population(1.0, 1.0, lambda);
            let res = continue_equilibria(&spec, Parameter::Gain, (0.1, 8.0), &ContinuationOptions::default()).unwrap();
            let pf: Vec<_> = res.of_kind(BifurcationKind::Pitchfork).collect();
            assert_eq!(pf.len(), 1, "{:?}", res.bifurcations);
            assert!((pf[0].parameter("g").unwrap() - expected).abs() < 1e-6);
            assert_eq!(res.of_kind(BifurcationKind::SaddleNode).count(), 0);
        }
    }

    #[test]
    fn large_noise_removes_pitchfork() {
        let spec = ModelSpec::one_population(1.0, 1.0, 0.8);
        let res = continue_equilibria(&spec, Parameter::Gain, (0.01, 20.0), &ContinuationOptions::default()).unwrap();
        assert!(res.bifurcations.is_empty(), "{:?}", res.bifurcations);
    }

    #[test]
    fn folds_in_input() {
        let spec = ModelSpec::excitatory_inhibitory(1.0, 3.0, 0.0, -3.0);
        let res =
            continue_equilibria(&spec, Parameter::Input(0), (-15.0, 15.0), &ContinuationOptions::default()).unwrap();
        assert_eq!(res.of_kind(BifurcationKind::SaddleNode).count(), 2, "{:?}", res.bifurcations);
        assert_eq!(res.of_kind(BifurcationKind::Hopf).count(), 0);
        assert!(res.branches.iter().all(|b| !b.truncated));
    }
}
