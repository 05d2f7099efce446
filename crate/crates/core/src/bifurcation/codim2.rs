use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::continuation::{continue_equilibria, dedup, point, ContinuationOptions};
use super::curve::{self, CurvePoint, TraceOptions};
use super::cycles::near_unstable_focus;
use super::equilibria::{default_seeds, find_equilibria};
use super::{eigenvalues, hopf_test, BifurcationKind, BifurcationPoint, Family, Stability};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, Parameter};
use crate::moments::{self, OdeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub p1: (f64, f64),
    pub p2: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codim2Options {
    /// Number of `p2` levels (edges of the box included) scanned by
    /// one-parameter continuation for curve seeds.
    pub levels: usize,
    pub step: f64,
    pub max_steps: usize,
}

impl Default for Codim2Options {
    fn default() -> Self {
        Codim2Options { levels: 13, step: 0.02, max_steps: 50_000 }
    }
}

const TOL: f64 = 1e-10;

fn covered(traced: &[Vec<CurvePoint>], x: &[f64], radius: f64) -> bool {
    traced.iter().flatten().any(|cp| cp.x.iter().zip(x).all(|(a, b)| (a - b).abs() < radius))
}

/// Traces a curve through `seed` in both directions.
fn trace_both<G: Fn(&[f64]) -> Vec<f64>>(g: &G, seed: &[f64], opts: &TraceOptions) -> Vec<CurvePoint> {
    let n = seed.len();
    let Some(t) = curve::tangent(g, seed, None) else {
        return Vec::new();
    };
    let forward = curve::trace(g, seed, &t, opts);
    let back_dir: Vec<f64> = t.iter().map(|v| -v).collect();
    let backward = curve::trace(g, seed, &back_dir, opts);
    let mut pts: Vec<CurvePoint> = backward
        .points
        .into_iter()
        .rev()
        .map(|cp| CurvePoint { x: cp.x, tangent: cp.tangent.iter().map(|v| -v).collect() })
        .collect();
    pts.pop();
    pts.extend(forward.points);
    debug_assert!(pts.iter().all(|p| p.x.len() == n));
    pts
}

/// Locates Bogdanov–Takens points, cusps and Hopf-curve turning points
/// (extrema of `p2` along the Hopf curve) inside the search box.
///
/// Fold and Hopf curves are seeded by one-parameter continuation in `p1` at
/// several `p2` levels and then traced in the `(μ, p1, p2)` space: fold
/// curves as `{F = 0, det J = 0}`, Hopf curves as `{F = 0, tr J = 0}` (the
/// bialternate product for more than two populations). Along a fold curve a
/// BT point is a zero of the trace and a cusp is where `p2` is extremal,
/// which forces the projected curve to stop in the parameter plane.
pub fn find_codim2(
    spec: &ModelSpec,
    p1: Parameter,
    p2: Parameter,
    bx: &SearchBox,
    opts: &Codim2Options,
) -> Result<Vec<BifurcationPoint>> {
    if !(bx.p1.0 < bx.p1.1 && bx.p2.0 < bx.p2.1) {
        return Err(Error::InvalidConfig("search box bounds must be increasing".into()));
    }
    if opts.levels < 2 || !(opts.step > 0.0) {
        return Err(Error::InvalidConfig("codim-2 search needs levels ≥ 2 and a positive step".into()));
    }
    spec.validate()?;
    let family = Family::new(spec, vec![p1, p2]);
    let p = family.p();
    let (i1, i2) = (p, p + 1);

    let mut fold_seeds = Vec::new();
    let mut hopf_seeds = Vec::new();
    let cont = ContinuationOptions { step: opts.step * 5.0, max_steps: opts.max_steps };
    for k in 0..opts.levels {
        let inset = 1e-9 * (bx.p2.1 - bx.p2.0);
        let level = bx.p2.0 + inset + (bx.p2.1 - bx.p2.0 - 2.0 * inset) * k as f64 / (opts.levels - 1) as f64;
        let res = continue_equilibria(&p2.apply(spec, level), p1, bx.p1, &cont)?;
        for bp in &res.bifurcations {
            let mut x = bp.state.clone();
            x.push(bp.parameters[&p1.to_string()]);
            x.push(level);
            match bp.kind {
                BifurcationKind::SaddleNode => fold_seeds.push(x),
                BifurcationKind::Hopf => hopf_seeds.push(x),
                _ => {}
            }
        }
    }

    let trace_opts = TraceOptions {
        h0: opts.step / 4.0,
        h_min: 1e-10,
        h_max: opts.step,
        max_steps: opts.max_steps,
        bounds: vec![(i1, bx.p1.0, bx.p1.1), (i2, bx.p2.0, bx.p2.1)],
        tol: TOL,
    };
    let mut found = Vec::new();

    let fold = |x: &[f64]| {
        let mut r = family.field(x);
        r.push(family.jacobian(x).determinant());
        r
    };
    let mut traced: Vec<Vec<CurvePoint>> = Vec::new();
    for seed in &fold_seeds {
        if covered(&traced, seed, 2.0 * opts.step) {
            continue;
        }
        let Some(seed) = curve::correct(&fold, seed, &unit(seed.len(), i2), TOL) else {
            continue;
        };
        let pts = trace_both(&fold, &seed, &trace_opts);
        for w in pts.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let tr = |x: &[f64]| hopf_test(&family.jacobian(x));
            if (tr(&a.x) > 0.0) != (tr(&b.x) > 0.0) {
                if let Some(x) = curve::locate(&fold, a, b, tr, TOL) {
                    let eig = eigenvalues(&family.jacobian(&x));
                    if eig.iter().filter(|e| e.norm() < 1e-5).count() >= 2 {
                        found.push(point(&family, BifurcationKind::BogdanovTakens, &x));
                    }
                }
            }
            if (a.tangent[i2] > 0.0) != (b.tangent[i2] > 0.0) {
                let reference = a.tangent.clone();
                let psi = |x: &[f64]| curve::tangent(&fold, x, Some(&reference)).map_or(0.0, |t| t[i2]);
                if let Some(x) = curve::locate(&fold, a, b, psi, TOL) {
                    let t = curve::tangent(&fold, &x, Some(&reference)).unwrap_or_default();
                    if t.get(i1).is_some_and(|v| v.abs() < 1e-3) {
                        found.push(point(&family, BifurcationKind::Cusp, &x));
                    }
                }
            }
        }
        traced.push(pts);
    }

    let hopf = |x: &[f64]| {
        let mut r = family.field(x);
        r.push(hopf_test(&family.jacobian(x)));
        r
    };
    let mut traced: Vec<Vec<CurvePoint>> = Vec::new();
    for seed in &hopf_seeds {
        if covered(&traced, seed, 2.0 * opts.step) {
            continue;
        }
        let Some(seed) = curve::correct(&hopf, seed, &unit(seed.len(), i2), TOL) else {
            continue;
        };
        let pts = trace_both(&hopf, &seed, &trace_opts);
        for w in pts.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if (a.tangent[i2] > 0.0) != (b.tangent[i2] > 0.0) {
                let reference = a.tangent.clone();
                let psi = |x: &[f64]| curve::tangent(&hopf, x, Some(&reference)).map_or(0.0, |t| t[i2]);
                if let Some(x) = curve::locate(&hopf, a, b, psi, TOL) {
                    let jac = family.jacobian(&x);
                    let eig = eigenvalues(&jac);
                    if let Some(e) = eig.iter().find(|e| e.im > 1e-8) {
                        if jac.determinant() > 0.0 {
                            let mut bp = point(&family, BifurcationKind::HopfTurningPoint, &x);
                            bp.auxiliary.insert("omega".into(), e.im);
                            found.push(bp);
                        }
                    }
                }
            }
        }
        traced.push(pts);
    }
    dedup(&mut found, 1e-5);
    Ok(found)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomoclinicOptions {
    /// `p1` samples per level between the two Hopf points.
    pub grid: usize,
    /// Width of the final `p2` bracket.
    pub tolerance: f64,
    /// How long an orbit may take to reach a stable equilibrium.
    pub t_escape: f64,
    pub continuation: ContinuationOptions,
}

impl Default for HomoclinicOptions {
    fn default() -> Self {
        HomoclinicOptions { grid: 41, tolerance: 2e-3, t_escape: 3000.0, continuation: ContinuationOptions::default() }
    }
}

/// Does the orbit leaving the repelling focus end on a stable equilibrium?
/// `None` when there is no repelling focus.
fn escapes(spec: &ModelSpec, t_escape: f64) -> Result<Option<bool>> {
    let Some(init) = near_unstable_focus(spec)? else {
        return Ok(None);
    };
    let end = moments::integrate(spec, &init, &OdeConfig::adaptive(t_escape))?.last().mean.clone();
    let set = find_equilibria(spec, &default_seeds(spec))?;
    let settled = set.stable().any(|e| e.mu_star.iter().zip(&end).all(|(a, b)| (a - b).abs() < 1e-6));
    Ok(Some(settled))
}

/// `p1` values at this `p2` level where the orbit from the repelling focus escapes.
fn escape_cells(spec: &ModelSpec, p1: Parameter, p1_range: (f64, f64), opts: &HomoclinicOptions) -> Result<Vec<f64>> {
    let res = continue_equilibria(spec, p1, p1_range, &opts.continuation)?;
    let hopf: Vec<f64> = res.of_kind(BifurcationKind::Hopf).map(|b| b.parameters[&p1.to_string()]).collect();
    let (Some(&a), Some(&b)) = (hopf.first(), hopf.last()) else {
        return Ok(Vec::new());
    };
    if hopf.len() < 2 {
        return Ok(Vec::new());
    }
    let cells: Vec<f64> = (1..opts.grid).map(|k| a + (b - a) * k as f64 / opts.grid as f64).collect();
    let flags: Vec<bool> = cells
        .par_iter()
        .map(|&x| Ok(escapes(&p1.apply(spec, x), opts.t_escape)? == Some(true)))
        .collect::<Result<_>>()?;
    Ok(cells.into_iter().zip(flags).filter(|(_, f)| *f).map(|(x, _)| x).collect())
}

/// Estimates the extremum in `p2` of the homoclinic curve that leaves a BT point.
///
/// Inside the homoclinic loop the orbit leaving the repelling focus winds
/// onto a cycle; beyond it the cycle is gone and the orbit ends on the stable
/// node. At each `p2` level the focus-unstable stretch between the two Hopf
/// points is sampled for such escapes, and `p2` is bisected inside `p2_bracket`
/// (escapes at the first end, none at the second) for the last level that has
/// any. The result is reported as a homoclinic estimate with a tolerance of 0.05.
pub fn homoclinic_turning_point(
    spec: &ModelSpec,
    p1: Parameter,
    p2: Parameter,
    p1_range: (f64, f64),
    p2_bracket: (f64, f64),
    opts: &HomoclinicOptions,
) -> Result<BifurcationPoint> {
    if opts.grid < 2 || !(opts.tolerance > 0.0) || !(opts.t_escape > 0.0) {
        return Err(Error::InvalidConfig("homoclinic search needs grid ≥ 2 and positive tolerances".into()));
    }
    spec.validate()?;
    let (mut lo, mut hi) = p2_bracket;
    let mut cells = escape_cells(&p2.apply(spec, lo), p1, p1_range, opts)?;
    if cells.is_empty() {
        return Err(Error::InvalidConfig(format!("no escaping orbit at {p2} = {lo}")));
    }
    if !escape_cells(&p2.apply(spec, hi), p1, p1_range, opts)?.is_empty() {
        return Err(Error::InvalidConfig(format!("orbits still escape at {p2} = {hi}")));
    }
    while (hi - lo).abs() > opts.tolerance {
        let mid = 0.5 * (lo + hi);
        let found = escape_cells(&p2.apply(spec, mid), p1, p1_range, opts)?;
        if found.is_empty() {
            hi = mid;
        } else {
            lo = mid;
            cells = found;
        }
    }
    let x1 = cells.iter().sum::<f64>() / cells.len() as f64;
    let at = p1.apply(&p2.apply(spec, lo), x1);
    let saddle = find_equilibria(&at, &default_seeds(&at))?
        .equilibria
        .into_iter()
        .find(|e| e.stability == Stability::Saddle)
        .map(|e| e.mu_star)
        .unwrap_or_default();
    let mut parameters = std::collections::BTreeMap::new();
    parameters.insert(p1.to_string(), x1);
    parameters.insert(p2.to_string(), 0.5 * (lo + hi));
    let mut auxiliary = std::collections::BTreeMap::new();
    auxiliary.insert("tolerance".into(), 0.05);
    auxiliary.insert("bracket".into(), (hi - lo).abs());
    Ok(BifurcationPoint { kind: BifurcationKind::HomoclinicEstimate, parameters, state: saddle, auxiliary })
}

fn unit(n: usize, k: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[k] = 1.0;
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_population_cusp_sits_on_the_pitchfork() {
        // Away from I = −J/2 the pitchfork unfolds into two folds that meet at a cusp.
        let spec = ModelSpec::one_population(1.0, 4.0, 0.0);
        let bx = SearchBox { p1: (-1.5, 0.5), p2: (0.0, 0.5) };
        let pts = find_codim2(&spec, Parameter::Input(0), Parameter::Noise, &bx, &Codim2Options::default()).unwrap();
        let cusps: Vec<_> = pts.iter().filter(|b| b.kind == BifurcationKind::Cusp).collect();
        assert_eq!(cusps.len(), 1, "{pts:?}");
        let lambda = cusps[0].parameter("lambda").unwrap();
        let expected = ((1.0 - 2.0 * std::f64::consts::PI / 16.0) / std::f64::consts::PI).sqrt();
        assert!((lambda - expected).abs() < 1e-5, "{lambda} vs {expected}");
        assert!((cusps[0].parameter("I1").unwrap() + 0.5).abs() < 1e-6);
        assert!(pts.iter().all(|b| b.kind != BifurcationKind::BogdanovTakens));
    }
}
