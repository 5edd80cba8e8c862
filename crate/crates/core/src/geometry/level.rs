use serde::{Deserialize, Serialize};

use super::qp::{project_polyhedron, HalfSpace, PolyProjection};
use super::region::Region;
use crate::error::{Error, Result};
use crate::linalg::{dist, norm, Point};
use crate::problems::Cut;

pub const DEFAULT_QP_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LevelProjection {
    Feasible {
        point: Point,
        multipliers: Vec<f64>,
        kkt_residual: f64,
    },
    /// Weights `w >= 0` (summing to one) with `sum w_i (support_i(x) - level) > 0` on the whole region.
    Infeasible { certificate: Vec<f64> },
}

impl LevelProjection {
    pub fn point(&self) -> Option<&Point> {
        match self {
            LevelProjection::Feasible { point, .. } => Some(point),
            LevelProjection::Infeasible { .. } => None,
        }
    }
}

fn cut_rows(cuts: &[Cut], level: f64) -> Vec<HalfSpace> {
    cuts.iter()
        .map(|c| HalfSpace {
            normal: c.gradient.clone(),
            rhs: level - c.intercept(),
            scale: level.abs() + c.value.abs() + norm(&c.gradient) * c.center.norm(),
        })
        .collect()
}

fn box_rows(lower: &[f64], upper: &[f64]) -> Vec<HalfSpace> {
    let n = lower.len();
    let mut rows = Vec::with_capacity(2 * n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        if upper[j].is_finite() {
            rows.push(HalfSpace {
                normal: e.clone(),
                rhs: upper[j],
                scale: upper[j].abs(),
            });
        }
        if lower[j].is_finite() {
            e[j] = -1.0;
            rows.push(HalfSpace {
                normal: e,
                rhs: -lower[j],
                scale: lower[j].abs(),
            });
        }
    }
    rows
}

fn polyhedral(y: &[f64], rows: &[HalfSpace], ncuts: usize, tol: f64) -> Result<LevelProjection> {
    Ok(match project_polyhedron(y, rows, tol)? {
        PolyProjection::Feasible {
            x,
            mut multipliers,
            residual,
        } => {
            multipliers.truncate(ncuts);
            LevelProjection::Feasible {
                point: Point(x),
                multipliers,
                kkt_residual: residual,
            }
        }
        PolyProjection::Infeasible { mut certificate } => {
            certificate.truncate(ncuts);
            let s: f64 = certificate.iter().sum();
            if s > 0.0 {
                certificate.iter_mut().for_each(|w| *w /= s);
            }
            LevelProjection::Infeasible { certificate }
        }
    })
}

/// Projection of `y` onto `{x in region : support_i(x) <= level for all cuts}`.
pub fn project_onto_level_set(
    y: &Point,
    cuts: &[Cut],
    level: f64,
    region: &Region,
    tol: f64,
) -> Result<LevelProjection> {
    if cuts.iter().any(|c| c.gradient.len() != y.dim()) {
        return Err(Error::Dimension {
            expected: y.dim(),
            got: cuts
                .iter()
                .map(|c| c.gradient.len())
                .find(|&l| l != y.dim())
                .unwrap_or(0),
        });
    }
    let mut rows = cut_rows(cuts, level);
    match region {
        Region::WholeSpace => polyhedral(y, &rows, cuts.len(), tol),
        Region::Box { lower, upper } => {
            rows.extend(box_rows(lower, upper));
            polyhedral(y, &rows, cuts.len(), tol)
        }
        Region::Ball { center, radius } => project_ball_level(y, &rows, center, *radius, tol),
    }
}

/// Ball regions: the ball constraint gets a scalar multiplier `eta`, and for
/// fixed `eta` the problem is a polyhedral projection of `(y + eta c)/(1 + eta)`.
/// The distance to the center is non-increasing in `eta`, so bisect on it.
fn project_ball_level(
    y: &[f64],
    rows: &[HalfSpace],
    c: &[f64],
    r: f64,
    tol: f64,
) -> Result<LevelProjection> {
    let n = y.len();
    let at = |eta: f64| -> Result<PolyProjection> {
        let ye: Vec<f64> = (0..n).map(|i| (y[i] + eta * c[i]) / (1.0 + eta)).collect();
        project_polyhedron(&ye, rows, tol)
    };
    let slack = tol * (1.0 + r);
    let feasible_point = |p: &PolyProjection| match p {
        PolyProjection::Feasible { x, .. } => Some(dist(x, c)),
        PolyProjection::Infeasible { .. } => None,
    };
    let finish = |p: PolyProjection, eta: f64| -> LevelProjection {
        match p {
            PolyProjection::Feasible {
                x,
                multipliers,
                residual,
            } => LevelProjection::Feasible {
                point: Point(x),
                multipliers: multipliers.iter().map(|m| m * (1.0 + eta)).collect(),
                kkt_residual: residual,
            },
            PolyProjection::Infeasible { certificate } => {
                LevelProjection::Infeasible { certificate }
            }
        }
    };
    let p0 = at(0.0)?;
    match feasible_point(&p0) {
        None => return Ok(finish(p0, 0.0)),
        Some(d) if d <= r + slack => return Ok(finish(p0, 0.0)),
        _ => {}
    }
    let pc = project_polyhedron(c, rows, tol)?;
    if let PolyProjection::Feasible { x, multipliers, .. } = &pc {
        if dist(x, c) > r + slack {
            let s: f64 = multipliers.iter().sum();
            let certificate = multipliers
                .iter()
                .map(|m| if s > 0.0 { m / s } else { 0.0 })
                .collect();
            return Ok(LevelProjection::Infeasible { certificate });
        }
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut best = loop {
        let p = at(hi)?;
        if feasible_point(&p).map_or(false, |d| d <= r) {
            break p;
        }
        lo = hi;
        hi *= 4.0;
        if hi > 1e30 {
            return Ok(finish(pc, 1e30));
        }
    };
    for _ in 0..200 {
        if hi - lo <= 1e-15 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let p = at(mid)?;
        if feasible_point(&p).map_or(false, |d| d <= r) {
            hi = mid;
            best = p;
        } else {
            lo = mid;
        }
    }
    Ok(finish(best, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cut(center: f64, value: f64, g: f64) -> Cut {
        Cut {
            center: Point(vec![center]),
            value,
            gradient: vec![g],
        }
    }

    #[test]
    fn projection_onto_tangent_of_square() {
        let p = project_onto_level_set(
            &Point(vec![1.0]),
            &[cut(1.0, 1.0, 2.0)],
            0.0,
            &Region::WholeSpace,
            1e-12,
        )
        .unwrap();
        assert!((p.point().unwrap()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ball_region_projection() {
        let region = Region::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        let cuts = [Cut {
            center: Point(vec![0.0, 0.0]),
            value: 0.0,
            gradient: vec![1.0, 0.0],
        }];
        let p =
            project_onto_level_set(&Point(vec![2.0, 2.0]), &cuts, -0.5, &region, 1e-12).unwrap();
        let x = p.point().unwrap();
        assert!((x[0] + 0.5).abs() < 1e-9);
        assert!((x[1] - 0.75f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn ball_region_infeasible() {
        let region = Region::Ball {
            center: vec![0.0],
            radius: 1.0,
        };
        let cuts = [cut(0.0, 0.0, 1.0)];
        match project_onto_level_set(&Point(vec![0.0]), &cuts, -2.0, &region, 1e-12).unwrap() {
            LevelProjection::Infeasible { certificate } => assert_eq!(certificate, vec![1.0]),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn box_region_clips() {
        let region = Region::Box {
            lower: vec![-1.0, -1.0],
            upper: vec![1.0, 1.0],
        };
        let cuts = [Cut {
            center: Point(vec![0.0, 0.0]),
            value: 0.0,
            gradient: vec![1.0, 1.0],
        }];
        let p =
            project_onto_level_set(&Point(vec![3.0, -3.0]), &cuts, 0.0, &region, 1e-12).unwrap();
        assert_eq!(p.point().unwrap().0, vec![1.0, -1.0]);
    }
}
