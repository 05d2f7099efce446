//! Pseudo-arclength tracing of one-dimensional solution curves `G(x) = 0`,
//! `G: R^{n+1} → R^n`, with finite-difference Jacobians and event location
//! by bisection along the chord between consecutive points.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub(crate) struct TraceOptions {
    pub h0: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// `(coordinate, lower, upper)`; tracing stops when a point leaves the box.
    pub bounds: Vec<(usize, f64, f64)>,
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct CurvePoint {
    pub x: Vec<f64>,
    pub tangent: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct Traced {
    pub points: Vec<CurvePoint>,
    pub truncated: bool,
}

fn fd_jacobian<G: Fn(&[f64]) -> Vec<f64>>(g: &G, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let m = g(x).len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for k in 0..n {
        let h = 1e-7 * (1.0 + x[k].abs());
        xp[k] = x[k] + h;
        let up = g(&xp);
        xp[k] = x[k] - h;
        let dn = g(&xp);
        xp[k] = x[k];
        for i in 0..m {
            jac[(i, k)] = (up[i] - dn[i]) / (2.0 * h);
        }
    }
    jac
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let n = dot(&v, &v).sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Unit tangent at `x`, oriented along `reference` when given.
pub(crate) fn tangent<G: Fn(&[f64]) -> Vec<f64>>(g: &G, x: &[f64], reference: Option<&[f64]>) -> Option<Vec<f64>> {
    let jac = fd_jacobian(g, x);
    let (m, n) = jac.shape();
    let solve_with = |row: &[f64]| -> Option<Vec<f64>> {
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (m, n)).copy_from(&jac);
        for k in 0..n {
            a[(m, k)] = row[k];
        }
        let mut rhs = DVector::zeros(n);
        rhs[m] = 1.0;
        let t = a.lu().solve(&rhs)?;
        t.iter().all(|v| v.is_finite()).then(|| normalize(t.iter().copied().collect()))
    };
    match reference {
        Some(r) => {
            let t = solve_with(r)?;
            Some(if dot(&t, r) < 0.0 { t.into_iter().map(|v| -v).collect() } else { t })
        }
        None => {
            // Pick the coordinate row that gives the best-conditioned bordered system.
            let mut best: Option<(f64, Vec<f64>)> = None;
            for k in 0..n {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                if let Some(t) = solve_with(&e) {
                    let score = t[k].abs();
                    if best.as_ref().is_none_or(|(s, _)| score > *s) {
                        best = Some((score, t));
                    }
                }
            }
            best.map(|(_, t)| t)
        }
    }
}

/// Newton correction of `pred` onto the curve within the hyperplane through
/// `pred` orthogonal to `dir`.
pub(crate) fn correct<G: Fn(&[f64]) -> Vec<f64>>(g: &G, pred: &[f64], dir: &[f64], tol: f64) -> Option<Vec<f64>> {
    let n = pred.len();
    let mut x = pred.to_vec();
    for _ in 0..20 {
        let r = g(&x);
        let m = r.len();
        let jac = fd_jacobian(g, &x);
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (m, n)).copy_from(&jac);
        let mut rhs = DVector::zeros(n);
        for i in 0..m {
            rhs[i] = -r[i];
        }
        for k in 0..n {
            a[(m, k)] = dir[k];
        }
        let offset: Vec<f64> = x.iter().zip(pred).map(|(a, b)| a - b).collect();
        rhs[m] = -dot(dir, &offset);
        let dx = a.lu().solve(&rhs)?;
        for k in 0..n {
            x[k] += dx[k];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let step = dx.amax();
        if step < 1e-10 * (1.0 + norm_inf(&x)) && norm_inf(&g(&x)) < tol {
            return Some(x);
        }
    }
    (norm_inf(&g(&x)) < tol).then_some(x)
}

fn in_bounds(x: &[f64], bounds: &[(usize, f64, f64)]) -> bool {
    bounds.iter().all(|&(k, lo, hi)| x[k] >= lo && x[k] <= hi)
}

/// Traces the curve through `start` in the direction of `initial` (which
/// need not be exact; it is only used to orient the first tangent).
pub(crate) fn trace<G: Fn(&[f64]) -> Vec<f64>>(g: &G, start: &[f64], initial: &[f64], opts: &TraceOptions) -> Traced {
    let mut out = Traced { points: Vec::new(), truncated: false };
    let Some(t0) = tangent(g, start, None) else {
        out.truncated = true;
        return out;
    };
    let t0 = if dot(&t0, initial) < 0.0 { t0.into_iter().map(|v| -v).collect() } else { t0 };
    let mut x = start.to_vec();
    let mut t = t0;
    out.points.push(CurvePoint { x: x.clone(), tangent: t.clone() });
    let mut h = opts.h0.min(opts.h_max);
    let mut steps = 0;
    while steps < opts.max_steps {
        steps += 1;
        let pred: Vec<f64> = x.iter().zip(&t).map(|(a, b)| a + h * b).collect();
        let accepted = correct(g, &pred, &t, opts.tol).and_then(|xn| {
            let tn = tangent(g, &xn, Some(&t))?;
            let drift = norm_inf(&xn.iter().zip(&pred).map(|(a, b)| a - b).collect::<Vec<_>>());
            (dot(&tn, &t) > 0.95 && drift < 0.5 * h.max(1e-12) + 1e-9).then_some((xn, tn))
        });
        match accepted {
            Some((xn, tn)) => {
                if !in_bounds(&xn, &opts.bounds) {
                    return out;
                }
                let dist_to_start = norm_inf(&xn.iter().zip(start).map(|(a, b)| a - b).collect::<Vec<_>>());
                out.points.push(CurvePoint { x: xn.clone(), tangent: tn.clone() });
                if out.points.len() > 10 && dist_to_start < 0.5 * h {
                    return out;
                }
                x = xn;
                t = tn;
                h = (h * 1.3).min(opts.h_max);
            }
            None => {
                h *= 0.5;
                if h < opts.h_min {
                    out.truncated = true;
                    return out;
                }
            }
        }
    }
    out.truncated = true;
    out
}

/// Locates a sign change of `psi` between two consecutive curve points.
pub(crate) fn locate<G, P>(g: &G, a: &CurvePoint, b: &CurvePoint, psi: P, tol: f64) -> Option<Vec<f64>>
where
    G: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&[f64]) -> f64,
{
    let chord: Vec<f64> = b.x.iter().zip(&a.x).map(|(p, q)| p - q).collect();
    let len = dot(&chord, &chord).sqrt();
    if len == 0.0 {
        return Some(a.x.clone());
    }
    let dir: Vec<f64> = chord.iter().map(|c| c / len).collect();
    let at = |s: f64| -> Option<Vec<f64>> {
        let pred: Vec<f64> = a.x.iter().zip(&chord).map(|(p, c)| p + s * c).collect();
        correct(g, &pred, &dir, tol)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut psi_lo = psi(&a.x);
    let mut best = a.x.clone();
    for _ in 0..80 {
        if (hi - lo) * len < 1e-12 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        // The corrector can break down right at a branch point; keep the best bracket.
        let Some(x) = at(mid) else { break };
        let pm = psi(&x);
        best = x;
        if pm == 0.0 {
            break;
        }
        if (pm > 0.0) == (psi_lo > 0.0) {
            lo = mid;
            psi_lo = pm;
        } else {
            hi = mid;
        }
    }
    Some(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn traces_circle_and_finds_turning_point() {
        let g = |x: &[f64]| vec![x[0] * x[0] + x[1] * x[1] - 1.0];
        let opts = TraceOptions { h0: 0.05, h_min: 1e-8, h_max: 0.1, max_steps: 500, bounds: vec![], tol: 1e-12 };
        let traced = trace(&g, &[1.0, 0.0], &[0.0, 1.0], &opts);
        assert!(!traced.truncated);
        assert!(traced.points.len() > 50);
        for p in &traced.points {
            assert!(g(&p.x)[0].abs() < 1e-11);
        }
        // y is extremal where the tangent's y component changes sign: (0, ±1)
        let pairs: Vec<_> =
            traced.points.windows(2).filter(|w| (w[0].tangent[1] > 0.0) != (w[1].tangent[1] > 0.0)).collect();
        assert!(!pairs.is_empty());
        let ref_t = pairs[0][0].tangent.clone();
        let tp = locate(&g, &pairs[0][0], &pairs[0][1], |x| tangent(&g, x, Some(&ref_t)).unwrap()[1], 1e-12).unwrap();
        assert!(tp[0].abs() < 1e-8 && (tp[1].abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn stops_at_bounds() {
        let g = |x: &[f64]| vec![x[1] - 2.0 * x[0]];
        let opts = TraceOptions {
            h0: 0.05,
            h_min: 1e-8,
            h_max: 0.1,
            max_steps: 500,
            bounds: vec![(0, -1.0, 1.0)],
            tol: 1e-12,
        };
        let traced = trace(&g, &[0.0, 0.0], &[1.0, 0.0], &opts);
        assert!(!traced.truncated);
        assert!(traced.points.last().unwrap().x[0] <= 1.0);
        assert!(traced.points.last().unwrap().x[0] > 0.9);
    }
}
