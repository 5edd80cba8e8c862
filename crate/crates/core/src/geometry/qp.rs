//! Euclidean projection onto a polyhedron `{x : <a_i, x> <= b_i}` by a dual
//! active-set method (Goldfarb-Idnani with identity hessian).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, norm_sq};

#[derive(Debug, Clone)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub rhs: f64,
    /// Magnitude of the numbers that produced `rhs`, used to scale the feasibility tolerance.
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub enum PolyProjection {
    Feasible {
        x: Vec<f64>,
        multipliers: Vec<f64>,
        residual: f64,
    },
    /// Non-negative weights with `sum w_i a_i = 0` and `sum w_i b_i < 0`, normalized to sum to one.
    Infeasible { certificate: Vec<f64> },
}

const DEPENDENCE_TOL: f64 = 1e-13;

/// Least-squares coefficients of `a` on the active normals and the residual `a - N r`.
fn split(active: &[usize], rows: &[HalfSpace], a: &[f64]) -> (Vec<f64>, Vec<f64>) {
    if active.is_empty() {
        return (vec![], a.to_vec());
    }
    let n = a.len();
    let cols: Vec<DVector<f64>> = active
        .iter()
        .map(|&i| DVector::from_column_slice(&rows[i].normal))
        .collect();
    let nmat = DMatrix::from_columns(&cols);
    let qr = nmat.clone().qr();
    let qta = qr.q().transpose() * DVector::from_column_slice(a);
    let r = qr
        .r()
        .solve_upper_triangular(&qta)
        .unwrap_or_else(|| DVector::zeros(active.len()));
    let fitted = &nmat * &r;
    let z: Vec<f64> = (0..n).map(|i| a[i] - fitted[i]).collect();
    (r.iter().copied().collect(), z)
}

fn violation_threshold(row: &HalfSpace, xnorm: f64, tol: f64) -> f64 {
    tol * (row.scale + norm(&row.normal) * xnorm) + 1e-300
}

pub fn project_polyhedron(y: &[f64], rows: &[HalfSpace], tol: f64) -> Result<PolyProjection> {
    let m = rows.len();
    let norms: Vec<f64> = rows.iter().map(|r| norm(&r.normal)).collect();
    for (i, row) in rows.iter().enumerate() {
        if norms[i] == 0.0 && row.rhs < -tol * row.scale.max(1e-300) {
            let mut certificate = vec![0.0; m];
            certificate[i] = 1.0;
            return Ok(PolyProjection::Infeasible { certificate });
        }
    }
    let mut x = y.to_vec();
    let mut active: Vec<usize> = Vec::new();
    let mut lam: Vec<f64> = Vec::new();
    let cap = 50 * m * m + 100;
    let mut iterations = 0;
    loop {
        let xnorm = norm(&x);
        let mut pick = None;
        let mut worst = 0.0;
        for i in 0..m {
            if norms[i] == 0.0 || active.contains(&i) {
                continue;
            }
            let viol = dot(&rows[i].normal, &x) - rows[i].rhs;
            if viol > violation_threshold(&rows[i], xnorm, tol) && viol / norms[i] > worst {
                worst = viol / norms[i];
                pick = Some(i);
            }
        }
        let Some(p) = pick else { break };
        let ap = &rows[p].normal;
        let mut lp = 0.0;
        loop {
            iterations += 1;
            if iterations > cap {
                return Err(Error::SolverStalled {
                    iterations,
                    residual: worst,
                });
            }
            let (r, z) = split(&active, rows, ap);
            let viol = dot(ap, &x) - rows[p].rhs;
            let zz = norm_sq(&z);
            let independent = active.len() < y.len() && zz.sqrt() > DEPENDENCE_TOL * norms[p];
            let t_full = if independent {
                viol.max(0.0) / zz
            } else {
                f64::INFINITY
            };
            let mut t_part = f64::INFINITY;
            let mut block = None;
            for (j, &rj) in r.iter().enumerate() {
                if rj > 1e-14 {
                    let tj = lam[j] / rj;
                    if tj < t_part {
                        t_part = tj;
                        block = Some(j);
                    }
                }
            }
            if t_full.is_infinite() && t_part.is_infinite() {
                let mut certificate = vec![0.0; m];
                certificate[p] = 1.0;
                for (j, &i) in active.iter().enumerate() {
                    certificate[i] = (-r[j]).max(0.0);
                }
                let s: f64 = certificate.iter().sum();
                certificate.iter_mut().for_each(|w| *w /= s);
                return Ok(PolyProjection::Infeasible { certificate });
            }
            let t = t_full.min(t_part);
            if t.is_finite() && zz > 0.0 && t_full.is_finite() {
                axpy(-t, &z, &mut x);
            }
            for (lj, rj) in lam.iter_mut().zip(&r) {
                *lj -= t * rj;
            }
            lp += t;
            if t_full <= t_part {
                active.push(p);
                lam.push(lp);
                break;
            }
            let j = block.expect("partial step has a blocking constraint");
            active.remove(j);
            lam.remove(j);
        }
    }
    let mut multipliers = vec![0.0; m];
    for (&i, &l) in active.iter().zip(&lam) {
        multipliers[i] = l.max(0.0);
    }
    let residual = kkt_residual(y, &x, rows, &multipliers);
    Ok(PolyProjection::Feasible {
        x,
        multipliers,
        residual,
    })
}

/// Max of primal violation, complementarity and stationarity error, each relative to problem scale.
pub fn kkt_residual(y: &[f64], x: &[f64], rows: &[HalfSpace], multipliers: &[f64]) -> f64 {
    let mut stat: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let mut res: f64 = 0.0;
    let xnorm = norm(x) + norm(y);
    for (row, &l) in rows.iter().zip(multipliers) {
        let slack = dot(&row.normal, x) - row.rhs;
        let scale = row.scale + norm(&row.normal) * xnorm + 1e-300;
        res = res.max(slack.max(0.0) / scale);
        res = res.max((l * slack).abs() / (scale * (1.0 + l)));
        axpy(l, &row.normal, &mut stat);
    }
    res.max(norm(&stat) / (1.0 + norm(y)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hs(normal: Vec<f64>, rhs: f64) -> HalfSpace {
        HalfSpace {
            normal,
            rhs,
            scale: rhs.abs(),
        }
    }

    #[test]
    fn single_halfspace_on_line() {
        let rows = vec![hs(vec![2.0], 1.0)];
        match project_polyhedron(&[1.0], &rows, 1e-12).unwrap() {
            PolyProjection::Feasible { x, multipliers, .. } => {
                assert!((x[0] - 0.5).abs() < 1e-15);
                assert!((multipliers[0] - 0.25).abs() < 1e-15);
            }
            _ => panic!("expected feasible"),
        }
    }

    #[test]
    fn corner_of_two_halfspaces() {
        let rows = vec![
            hs(vec![1.0, 0.0], 0.0),
            hs(vec![0.0, 1.0], 0.0),
            hs(vec![1.0, 1.0], 0.0),
        ];
        match project_polyhedron(&[1.0, 2.0], &rows, 1e-12).unwrap() {
            PolyProjection::Feasible { x, residual, .. } => {
                assert!(x[0].abs() < 1e-14 && x[1].abs() < 1e-14);
                assert!(residual < 1e-12);
            }
            _ => panic!("expected feasible"),
        }
    }

    #[test]
    fn opposite_halfspaces_are_infeasible() {
        let rows = vec![hs(vec![1.0], -1.0), hs(vec![-1.0], -1.0)];
        match project_polyhedron(&[0.0], &rows, 1e-12).unwrap() {
            PolyProjection::Infeasible { certificate } => {
                let agg: f64 = certificate[0] - certificate[1];
                let b: f64 = -certificate[0] - certificate[1];
                assert!(agg.abs() < 1e-14 && b < 0.0);
            }
            _ => panic!("expected infeasible"),
        }
    }
}
