//! `min_{x in K} max_i support_i(x)` over a region, optionally intersected with a ball.
//!
//! The minimum is bracketed by bisection on the level: a level is attainable
//! when the projection of the base point onto the level set exists (and lies
//! in the ball). Every multiplier vector seen along the way gives a dual lower
//! bound `min_K sum_i w_i support_i`, and the best such weights are returned.

use serde::{Deserialize, Serialize};

use super::level::{project_onto_level_set, LevelProjection};
use super::qp::{project_polyhedron, HalfSpace, PolyProjection};
use super::region::Region;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dist, dot, norm, Point};
use crate::problems::Cut;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxValue {
    /// Midpoint of the final bracket; `-inf` when unbounded below.
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    /// Simplex weights attaining `lower`.
    pub weights: Option<Vec<f64>>,
    pub argmin: Option<Point>,
}

impl MinMaxValue {
    pub fn is_unbounded(&self) -> bool {
        self.value == f64::NEG_INFINITY
    }
}

pub fn max_support(cuts: &[Cut], x: &[f64]) -> f64 {
    cuts.iter()
        .map(|c| c.support(x))
        .fold(f64::NEG_INFINITY, f64::max)
}

struct Dual<'a> {
    cuts: &'a [Cut],
    region: &'a Region,
    ball: Option<(&'a [f64], f64)>,
    gscale: f64,
}

impl Dual<'_> {
    /// Lower bound `min_K sum_i w_i support_i(x)` for weights on the simplex.
    fn bound(&self, w: &[f64]) -> f64 {
        let s: f64 = w.iter().sum();
        if !(s > 0.0) {
            return f64::NEG_INFINITY;
        }
        let n = self.cuts[0].gradient.len();
        let mut g = vec![0.0; n];
        let mut c = 0.0;
        for (wi, cut) in w.iter().zip(self.cuts) {
            if *wi > 0.0 {
                axpy(wi / s, &cut.gradient, &mut g);
                c += wi / s * cut.intercept();
            }
        }
        let mut best = match self.region {
            Region::WholeSpace => {
                if norm(&g) <= 1e-13 * self.gscale {
                    c
                } else {
                    f64::NEG_INFINITY
                }
            }
            r => r.min_linear(&g, c),
        };
        if let Some((center, radius)) = self.ball {
            best = best.max(c + dot(&g, center) - radius * norm(&g));
        }
        best
    }
}

pub fn min_max_affine(
    cuts: &[Cut],
    region: &Region,
    ball: Option<(&Point, f64)>,
    tol: f64,
) -> Result<MinMaxValue> {
    if cuts.is_empty() {
        return Err(Error::param("cuts", "need at least one cut"));
    }
    let n = cuts[0].gradient.len();
    let gscale = cuts
        .iter()
        .map(|c| norm(&c.gradient))
        .fold(0.0, f64::max)
        .max(1e-300);
    let dual = Dual {
        cuts,
        region,
        ball: ball.map(|(c, r)| (c.as_slice(), r)),
        gscale,
    };
    let base = match ball {
        Some((c, r)) => {
            if !(r >= 0.0) {
                return Err(Error::param("radius", "must be non-negative"));
            }
            if !region.contains(c, 1e-12 * (1.0 + c.norm())) {
                return Err(Error::Domain("ball center lies outside the region".into()));
            }
            c.clone()
        }
        None => region.project(&cuts[0].center),
    };
    let mut hi = max_support(cuts, &base);
    let mut argmin = base.clone();
    let mut lo = f64::NEG_INFINITY;
    let mut weights: Option<Vec<f64>> = None;
    let consider = |w: Vec<f64>, lo: &mut f64, weights: &mut Option<Vec<f64>>| {
        let b = dual.bound(&w);
        if b > *lo {
            *lo = b;
            let s: f64 = w.iter().sum();
            *weights = Some(w.iter().map(|v| v / s).collect());
        }
    };
    for i in 0..cuts.len() {
        let mut e = vec![0.0; cuts.len()];
        e[i] = 1.0;
        consider(e, &mut lo, &mut weights);
    }
    if lo == f64::NEG_INFINITY && region.is_whole_space() && ball.is_none() {
        // Bounded below iff 0 lies in the convex hull of the gradients, i.e.
        // iff no direction d has <g_i, d> <= -1 for every cut.
        let rows: Vec<HalfSpace> = cuts
            .iter()
            .map(|c| HalfSpace {
                normal: c.gradient.clone(),
                rhs: -1.0,
                scale: 1.0,
            })
            .collect();
        match project_polyhedron(&vec![0.0; n], &rows, 1e-12)? {
            PolyProjection::Feasible { x, .. } => {
                if norm(&x) * tol * gscale < 1.0 {
                    return Ok(MinMaxValue {
                        value: f64::NEG_INFINITY,
                        lower: f64::NEG_INFINITY,
                        upper: hi,
                        weights: None,
                        argmin: None,
                    });
                }
            }
            PolyProjection::Infeasible { certificate } => {
                consider(certificate, &mut lo, &mut weights)
            }
        }
    }
    let qp_tol = (tol * 1e-2).max(1e-14);
    let probe = |level: f64| -> Result<(bool, Option<Point>, Vec<f64>)> {
        Ok(
            match project_onto_level_set(&base, cuts, level, region, qp_tol)? {
                LevelProjection::Infeasible { certificate } => (false, None, certificate),
                LevelProjection::Feasible {
                    point, multipliers, ..
                } => {
                    let inside = ball.map_or(true, |(c, r)| dist(&point, c) <= r);
                    (inside, Some(point), multipliers)
                }
            },
        )
    };
    let mut step = 1.0 + hi.abs();
    let mut tries = 0;
    while lo == f64::NEG_INFINITY {
        tries += 1;
        if tries > 200 {
            return Ok(MinMaxValue {
                value: f64::NEG_INFINITY,
                lower: f64::NEG_INFINITY,
                upper: hi,
                weights: None,
                argmin: None,
            });
        }
        let level = hi - step;
        let (ok, point, w) = probe(level)?;
        if ok {
            let p = point.expect("attainable level has a point");
            hi = max_support(cuts, &p).max(level).min(hi);
            argmin = p;
            step *= 2.0;
        } else {
            consider(w, &mut lo, &mut weights);
            lo = lo.max(level);
        }
    }
    for _ in 0..300 {
        if hi - lo <= tol * (1.0 + hi.abs()) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (ok, point, w) = probe(mid)?;
        if ok {
            let p = point.expect("attainable level has a point");
            hi = max_support(cuts, &p).max(mid).min(hi);
            argmin = p;
        } else {
            consider(w, &mut lo, &mut weights);
            lo = lo.max(mid);
        }
    }
    Ok(MinMaxValue {
        value: 0.5 * (lo + hi),
        lower: lo,
        upper: hi,
        weights,
        argmin: Some(argmin),
    })
}

/// Normalized model decrease `(psi(center) - min_{B(center, iota) ∩ X} psi) / iota`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WGap {
    pub value: f64,
    /// Bracket from the min-max bracket; `upper_bound` is conservative.
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub weights: Option<Vec<f64>>,
}

pub fn eval_wgap(
    center: &Point,
    cuts: &[Cut],
    iota: f64,
    region: &Region,
    tol: f64,
) -> Result<WGap> {
    if !(iota > 0.0) || !iota.is_finite() {
        return Err(Error::param("iota", "radius must be positive and finite"));
    }
    let top = max_support(cuts, center);
    let mm = min_max_affine(cuts, region, Some((center, iota)), tol)?;
    Ok(WGap {
        value: (top - mm.value) / iota,
        lower_bound: (top - mm.upper) / iota,
        upper_bound: (top - mm.lower) / iota,
        weights: mm.weights,
    })
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
    fn abs_model_minimum_is_zero() {
        let cuts = [cut(1.0, 1.0, 1.0), cut(-1.0, 1.0, -1.0)];
        let mm = min_max_affine(&cuts, &Region::WholeSpace, None, 1e-12).unwrap();
        assert!(mm.value.abs() < 1e-10);
        let w = mm.weights.unwrap();
        assert!((w[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn single_slope_is_unbounded() {
        let mm = min_max_affine(&[cut(0.0, 0.0, 1.0)], &Region::WholeSpace, None, 1e-12).unwrap();
        assert!(mm.is_unbounded());
    }

    #[test]
    fn wgap_of_linear_model_is_slope() {
        let cuts = [cut(0.0, 0.0, 3.0)];
        let w = eval_wgap(&Point(vec![0.0]), &cuts, 0.5, &Region::WholeSpace, 1e-12).unwrap();
        assert!((w.value - 3.0).abs() < 1e-9);
    }

    #[test]
    fn wgap_interior_minimum() {
        // |x| model seen from 1: min over B(1, 2) is 0 at the interior kink.
        let cuts = [cut(1.0, 1.0, 1.0), cut(-1.0, 1.0, -1.0)];
        let w = eval_wgap(&Point(vec![1.0]), &cuts, 2.0, &Region::WholeSpace, 1e-12).unwrap();
        assert!((w.value - 0.5).abs() < 1e-9);
    }
}
