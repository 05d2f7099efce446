use serde::{Deserialize, Serialize};

use super::equilibria::{default_seeds, find_equilibria, EquilibriumRecord};
use super::{mean_field, mean_jacobian, Stability};
use crate::error::{Error, Result};
use crate::model::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortraitBox {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl PortraitBox {
    fn contains(&self, p: [f64; 2], margin: f64) -> bool {
        let wx = margin * (self.x.1 - self.x.0);
        let wy = margin * (self.y.1 - self.y.0);
        p[0] >= self.x.0 - wx && p[0] <= self.x.1 + wx && p[1] >= self.y.0 - wy && p[1] <= self.y.1 + wy
    }
}

/// Zero set of one component of the mean field, as unordered line segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nullcline {
    pub population: usize,
    pub segments: Vec<[[f64; 2]; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Stable,
    Unstable,
}

/// One branch of an invariant manifold of a saddle, starting next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifold {
    pub saddle: Vec<f64>,
    pub kind: ManifoldKind,
    pub path: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePortrait {
    pub bounds: PortraitBox,
    pub nullclines: Vec<Nullcline>,
    pub equilibria: Vec<EquilibriumRecord>,
    /// Empty when the box holds no saddle.
    pub manifolds: Vec<Manifold>,
}

const EPS: f64 = 1e-6;
const DT: f64 = 0.01;
const T_MAX: f64 = 200.0;

fn interp(p: [f64; 2], q: [f64; 2], a: f64, b: f64) -> [f64; 2] {
    let s = a / (a - b);
    [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])]
}

/// Marching squares on a node grid of values `z[j][i]`.
fn contour(xs: &[f64], ys: &[f64], z: &[Vec<f64>]) -> Vec<[[f64; 2]; 2]> {
    let mut segments = Vec::new();
    for j in 0..ys.len() - 1 {
        for i in 0..xs.len() - 1 {
            // Corners counter-clockwise from the lower left.
            let corners = [[xs[i], ys[j]], [xs[i + 1], ys[j]], [xs[i + 1], ys[j + 1]], [xs[i], ys[j + 1]]];
            let vals = [z[j][i], z[j][i + 1], z[j + 1][i + 1], z[j + 1][i]];
            let mut crossings = Vec::with_capacity(4);
            for e in 0..4 {
                let (a, b) = (vals[e], vals[(e + 1) % 4]);
                if (a > 0.0) != (b > 0.0) {
                    crossings.push(interp(corners[e], corners[(e + 1) % 4], a, b));
                }
            }
            match crossings.len() {
                2 => segments.push([crossings[0], crossings[1]]),
                4 => {
                    // Saddle cell: pair the crossings according to the centre value.
                    let centre = vals.iter().sum::<f64>() / 4.0;
                    if (centre > 0.0) == (vals[0] > 0.0) {
                        segments.push([crossings[0], crossings[3]]);
                        segments.push([crossings[1], crossings[2]]);
                    } else {
                        segments.push([crossings[0], crossings[1]]);
                        segments.push([crossings[2], crossings[3]]);
                    }
                }
                _ => {}
            }
        }
    }
    segments
}

fn rk4(spec: &ModelSpec, x: [f64; 2], sign: f64) -> [f64; 2] {
    let f = |p: [f64; 2]| {
        let v = mean_field(spec, &p);
        [sign * v[0], sign * v[1]]
    };
    let k1 = f(x);
    let k2 = f([x[0] + 0.5 * DT * k1[0], x[1] + 0.5 * DT * k1[1]]);
    let k3 = f([x[0] + 0.5 * DT * k2[0], x[1] + 0.5 * DT * k2[1]]);
    let k4 = f([x[0] + DT * k3[0], x[1] + DT * k3[1]]);
    [
        x[0] + DT / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + DT / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Follows the flow (or its reverse) until it leaves the box, stalls or runs out of time.
fn follow(spec: &ModelSpec, start: [f64; 2], sign: f64, bx: &PortraitBox) -> Vec<[f64; 2]> {
    let mut path = vec![start];
    let mut x = start;
    let steps = (T_MAX / DT) as usize;
    for k in 0..steps {
        let next = rk4(spec, x, sign);
        if !next.iter().all(|v| v.is_finite()) || !bx.contains(next, 0.1) {
            break;
        }
        let moved = ((next[0] - x[0]).powi(2) + (next[1] - x[1]).powi(2)).sqrt();
        x = next;
        if k % 5 == 0 {
            path.push(x);
        }
        if moved < 1e-12 {
            break;
        }
    }
    if path.last() != Some(&x) {
        path.push(x);
    }
    path
}

/// Real eigenvector of a 2×2 matrix for the real eigenvalue `ev`.
fn eigenvector(m: &nalgebra::DMatrix<f64>, ev: f64) -> [f64; 2] {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let v = if b.abs() >= c.abs() && b != 0.0 {
        [b, ev - a]
    } else if c != 0.0 {
        [ev - d, c]
    } else if (a - ev).abs() < (d - ev).abs() {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    [v[0] / n, v[1] / n]
}

/// Nullclines, equilibria and saddle manifolds of a two-population system
/// inside `bx`, with the variances at their stationary values. Nullclines
/// are extracted on a `resolution × resolution` node grid.
pub fn phase_portrait(spec: &ModelSpec, bx: &PortraitBox, resolution: usize) -> Result<PhasePortrait> {
    spec.validate()?;
    if spec.n_populations() != 2 {
        return Err(Error::InvalidModel(format!("phase portraits need two populations, got {}", spec.n_populations())));
    }
    if resolution < 2 || !(bx.x.0 < bx.x.1 && bx.y.0 < bx.y.1) {
        return Err(Error::InvalidConfig("portrait needs resolution ≥ 2 and increasing bounds".into()));
    }
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        (0..resolution).map(|k| lo + (hi - lo) * k as f64 / (resolution - 1) as f64).collect()
    };
    let (xs, ys) = (axis(bx.x), axis(bx.y));
    let field: Vec<Vec<Vec<f64>>> =
        ys.iter().map(|&y| xs.iter().map(|&x| mean_field(spec, &[x, y])).collect()).collect();
    let nullclines = (0..2)
        .map(|a| {
            let z: Vec<Vec<f64>> = field.iter().map(|row| row.iter().map(|f| f[a]).collect()).collect();
            Nullcline { population: a, segments: contour(&xs, &ys, &z) }
        })
        .collect();

    let equilibria: Vec<EquilibriumRecord> = find_equilibria(spec, &default_seeds(spec))?
        .equilibria
        .into_iter()
        .filter(|e| bx.contains([e.mu_star[0], e.mu_star[1]], 0.0))
        .collect();

    let mut manifolds = Vec::new();
    for e in equilibria.iter().filter(|e| e.stability == Stability::Saddle) {
        let jac = mean_jacobian(spec, &e.mu_star);
        let centre = [e.mu_star[0], e.mu_star[1]];
        for ev in &e.eigenvalues {
            let (kind, sign) = if ev[0] > 0.0 { (ManifoldKind::Unstable, 1.0) } else { (ManifoldKind::Stable, -1.0) };
            let v = eigenvector(&jac, ev[0]);
            for s in [1.0, -1.0] {
                let start = [centre[0] + s * EPS * v[0], centre[1] + s * EPS * v[1]];
                let mut path = vec![centre];
                path.extend(follow(spec, start, sign, bx));
                manifolds.push(Manifold { saddle: e.mu_star.clone(), kind, path });
            }
        }
    }
    Ok(PhasePortrait { bounds: *bx, nullclines, equilibria, manifolds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncoupled_nullclines_are_the_axes() {
        // Without coupling or input the field is −μ.
        let spec = ModelSpec::excitatory_inhibitory(0.0, 1.0, 0.0, 0.0);
        let bx = PortraitBox { x: (-1.0, 1.3), y: (-0.7, 1.1) };
        let pp = phase_portrait(&spec, &bx, 24).unwrap();
        for (a, nc) in pp.nullclines.iter().enumerate() {
            assert!(!nc.segments.is_empty());
            assert!(nc.segments.iter().flatten().all(|p| p[a].abs() < 1e-12), "{nc:?}");
        }
        assert_eq!(pp.equilibria.len(), 1);
        assert!(pp.manifolds.is_empty());
    }

    #[test]
    fn saddle_unstable_manifold_reaches_the_stable_point() {
        let spec = ModelSpec::excitatory_inhibitory(1.0, 0.0, 0.0, -3.0);
        let bx = PortraitBox { x: (-15.0, 20.0), y: (-10.0, 20.0) };
        let pp = phase_portrait(&spec, &bx, 60).unwrap();
        let stable: Vec<&EquilibriumRecord> =
            pp.equilibria.iter().filter(|e| e.stability == Stability::Stable).collect();
        assert_eq!(stable.len(), 1);
        let target = &stable[0].mu_star;
        let unstable: Vec<&Manifold> = pp.manifolds.iter().filter(|m| m.kind == ManifoldKind::Unstable).collect();
        assert_eq!(unstable.len(), 2);
        let lands = unstable.iter().any(|m| {
            let end = m.path.last().unwrap();
            (end[0] - target[0]).hypot(end[1] - target[1]) < 1e-3
        });
        assert!(lands, "{:?}", unstable.iter().map(|m| m.path.last()).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_one_population() {
        let spec = ModelSpec::one_population(1.0, 2.0, 0.1);
        let bx = PortraitBox { x: (-1.0, 1.0), y: (-1.0, 1.0) };
        assert!(matches!(phase_portrait(&spec, &bx, 10), Err(Error::InvalidModel(_))));
    }
}
