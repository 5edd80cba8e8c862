use serde::{Deserialize, Serialize};

use crate::linalg::{dot, norm, Point};

/// Simple convex feasible region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    WholeSpace,
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Default for Region {
    fn default() -> Self {
        Region::WholeSpace
    }
}

impl Region {
    pub fn is_whole_space(&self) -> bool {
        matches!(self, Region::WholeSpace)
    }

    pub fn is_bounded(&self) -> bool {
        !self.is_whole_space()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            Region::WholeSpace => true,
            Region::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (lo, hi))| *v >= lo - tol && *v <= hi + tol),
            Region::Ball { center, radius } => crate::linalg::dist(x, center) <= radius + tol,
        }
    }

    pub fn project(&self, x: &[f64]) -> Point {
        match self {
            Region::WholeSpace => Point(x.to_vec()),
            Region::Box { lower, upper } => Point(
                x.iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(v, (lo, hi))| v.max(*lo).min(*hi))
                    .collect(),
            ),
            Region::Ball { center, radius } => {
                let d = crate::linalg::dist(x, center);
                if d <= *radius {
                    Point(x.to_vec())
                } else {
                    let s = radius / d;
                    Point(center.iter().zip(x).map(|(c, v)| c + s * (v - c)).collect())
                }
            }
        }
    }

    /// `min_{x in region} <g, x> + c`, `-inf` when unbounded below.
    pub fn min_linear(&self, g: &[f64], c: f64) -> f64 {
        match self {
            Region::WholeSpace => {
                if g.iter().all(|v| *v == 0.0) {
                    c
                } else {
                    f64::NEG_INFINITY
                }
            }
            Region::Box { lower, upper } => {
                c + g
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(gi, (lo, hi))| (gi * lo).min(gi * hi))
                    .sum::<f64>()
            }
            Region::Ball { center, radius } => c + dot(g, center) - radius * norm(g),
        }
    }
}
