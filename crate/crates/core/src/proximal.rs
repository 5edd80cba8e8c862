//! Proximal surrogates `P(x) = f(x) + rho ||x - center||^2` and the inexact
//! proximal point method for weakly convex objectives.

use serde::{Deserialize, Serialize};

use crate::bundle::{Trace, TraceEvent, TraceRecord};
use crate::error::{Error, Result};
use crate::gapred::{bl_mu, gap_reduction, BlMuOptions, GrOptions};
use crate::geometry::{Region, DEFAULT_QP_TOL};
use crate::linalg::{axpy, dist_sq, norm_sq, Point};
use crate::problems::{Cut, FirstOrderOracle, OracleSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxSurrogate {
    pub center: Point,
    pub rho: f64,
}

impl ProxSurrogate {
    pub fn new(center: Point, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::param("rho", "must be positive"));
        }
        Ok(ProxSurrogate { center, rho })
    }

    fn quad(&self, x: &[f64]) -> f64 {
        self.rho * dist_sq(x, &self.center)
    }

    /// Base cut plus the linearization of `rho ||x - center||^2` at the cut center.
    pub fn lift_cut(&self, cut: &Cut) -> Cut {
        let mut gradient = cut.gradient.clone();
        for (g, (c, xb)) in gradient
            .iter_mut()
            .zip(cut.center.iter().zip(self.center.iter()))
        {
            *g += 2.0 * self.rho * (c - xb);
        }
        Cut {
            center: cut.center.clone(),
            value: cut.value + self.quad(&cut.center),
            gradient,
        }
    }

    /// Inverse of [`Self::lift_cut`].
    pub fn lower_cut(&self, cut: &Cut) -> Cut {
        let mut gradient = cut.gradient.clone();
        let shift: Vec<f64> = cut
            .center
            .iter()
            .zip(self.center.iter())
            .map(|(c, xb)| -2.0 * self.rho * (c - xb))
            .collect();
        axpy(1.0, &shift, &mut gradient);
        Cut {
            center: cut.center.clone(),
            value: cut.value - self.quad(&cut.center),
            gradient,
        }
    }

    pub fn lift(&self, s: OracleSample) -> OracleSample {
        let cut = self.lift_cut(&s.cut);
        let fx = s.fx + self.quad(&s.query);
        OracleSample { fx, cut, ..s }
    }

    pub fn lower(&self, s: &OracleSample) -> OracleSample {
        OracleSample {
            fx: s.fx - self.quad(&s.query),
            cut: self.lower_cut(&s.cut),
            ..s.clone()
        }
    }
}

/// Oracle for `P` built on top of an oracle for `f`.
pub struct ProxOracle<'a> {
    pub base: &'a mut dyn FirstOrderOracle,
    pub surrogate: ProxSurrogate,
}

impl<'a> ProxOracle<'a> {
    pub fn new(base: &'a mut dyn FirstOrderOracle, center: Point, rho: f64) -> Result<Self> {
        Ok(ProxOracle {
            base,
            surrogate: ProxSurrogate::new(center, rho)?,
        })
    }
}

impl FirstOrderOracle for ProxOracle<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn sample(&mut self, x: &Point) -> Result<OracleSample> {
        Ok(self.surrogate.lift(self.base.sample(x)?))
    }

    fn calls(&self) -> u64 {
        self.base.calls()
    }

    fn has_budget(&self) -> bool {
        self.base.has_budget()
    }
}

/// Lower bound on `min P` from one cut of the `rho`-strongly convex surrogate:
/// `value - ||g||^2 / (2 rho)`, which is `P(x) - ||f'(x)||^2 / (2 rho)` for an exact cut.
pub fn strong_convexity_lower_bound(sample: &OracleSample, rho: f64) -> f64 {
    sample.cut.value - norm_sq(&sample.cut.gradient) / (2.0 * rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubproblemStop {
    /// `P(center) - P(x) >= P(x) - lower`.
    HalfDescent,
    /// `P(center) - lower` fell below the requested threshold.
    SmallGap,
}

#[derive(Debug, Clone)]
pub struct Subproblem {
    /// Surrogate answer at the proximal center.
    pub center: OracleSample,
    /// Surrogate answer at the returned point.
    pub next: OracleSample,
    pub pbar0: f64,
    pub punder: f64,
    /// `P(center) - lower`.
    pub delta_bar: f64,
    pub gr_calls: usize,
    pub stop: SubproblemStop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubproblemOptions {
    pub m: usize,
    pub small_gap: f64,
    pub max_gr_calls: usize,
    pub tol: f64,
}

/// Gap reduction on `P_s` until the half-descent test or the small-gap test holds.
pub fn solve_subproblem(
    base: &mut dyn FirstOrderOracle,
    region: &Region,
    center: &Point,
    rho: f64,
    opts: &SubproblemOptions,
    trace: Option<&mut Trace>,
) -> Result<Subproblem> {
    let mut prox = ProxOracle::new(base, center.clone(), rho)?;
    let c = prox.sample(center)?;
    let pbar0 = c.fx;
    let mut punder = strong_convexity_lower_bound(&c, rho).min(pbar0);
    let mut cur = c.clone();
    let mut pbar = pbar0;
    let gr = GrOptions {
        mu: rho,
        m: opts.m,
        max_iters: 10_000,
        tol: opts.tol,
    };
    let mut gr_calls = 0;
    let mut trace = trace;
    loop {
        if pbar0 - punder <= opts.small_gap {
            return Ok(Subproblem {
                center: c,
                next: cur,
                pbar0,
                punder,
                delta_bar: pbar0 - punder,
                gr_calls,
                stop: SubproblemStop::SmallGap,
            });
        }
        if pbar0 - cur.fx >= cur.fx - punder {
            return Ok(Subproblem {
                center: c,
                next: cur,
                pbar0,
                punder,
                delta_bar: pbar0 - punder,
                gr_calls,
                stop: SubproblemStop::HalfDescent,
            });
        }
        if gr_calls >= opts.max_gr_calls {
            return Err(Error::IterationCap {
                stage: "proximal subproblem",
                cap: opts.max_gr_calls,
            });
        }
        let out = gap_reduction(
            &mut prox,
            region,
            cur,
            pbar,
            punder,
            &gr,
            trace.as_deref_mut(),
        )?;
        gr_calls += 1;
        cur = out.best;
        pbar = out.fbar;
        punder = out.funder;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuterStep {
    pub f_center: f64,
    pub f_next: f64,
    pub delta_bar: f64,
    pub gr_calls: usize,
}

#[derive(Debug, Clone)]
pub struct IppmResult {
    pub xbar: Point,
    pub f_xbar: f64,
    pub delta_bar: f64,
    pub outer: Vec<OuterStep>,
    /// Smallest surrogate lower bound seen, used for the loop cap.
    pub lowest_bound: f64,
    pub trace: Trace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IppmOptions {
    pub rho: f64,
    pub m: usize,
    pub eps: f64,
    /// Fixed outer cap; by default `ceil(16 rho (f(x0) - lowest bound) / eps^2) + 10`.
    pub max_outer: Option<usize>,
    pub max_gr_calls: usize,
    pub tol: f64,
}

impl IppmOptions {
    pub fn new(rho: f64, m: usize, eps: f64) -> Self {
        IppmOptions {
            rho,
            m,
            eps,
            max_outer: None,
            max_gr_calls: 500,
            tol: DEFAULT_QP_TOL,
        }
    }
}

pub fn ippm(
    base: &mut dyn FirstOrderOracle,
    region: &Region,
    x0: &Point,
    opts: &IppmOptions,
) -> Result<IppmResult> {
    if !(opts.eps > 0.0) {
        return Err(Error::param("eps", "must be positive"));
    }
    let rho = opts.rho;
    let threshold = opts.eps * opts.eps / (8.0 * rho);
    let sub = SubproblemOptions {
        m: opts.m,
        small_gap: threshold,
        max_gr_calls: opts.max_gr_calls,
        tol: opts.tol,
    };
    let mut xbar = region.project(x0);
    let mut trace = Trace::default();
    let mut outer = Vec::new();
    let mut f0 = None;
    let mut lowest = f64::INFINITY;
    loop {
        let s = outer.len();
        let prev = outer.last().map_or(f64::NAN, |o: &OuterStep| o.delta_bar);
        let res = solve_subproblem(base, region, &xbar, rho, &sub, Some(&mut trace))?;
        let f_center = res.pbar0;
        let f0 = *f0.get_or_insert(f_center);
        lowest = lowest
            .min(strong_convexity_lower_bound(&res.center, rho))
            .min(res.punder);
        let mut rec = TraceRecord::from_sample(
            &res.center,
            base.calls(),
            base.distance_to_solution(&xbar),
            TraceEvent::Outer {
                index: s,
                delta_bar: prev,
            },
        );
        rec.funder = Some(res.punder);
        trace.push(rec);
        if res.delta_bar <= threshold {
            return Ok(IppmResult {
                xbar,
                f_xbar: f_center,
                delta_bar: res.delta_bar,
                outer,
                lowest_bound: lowest,
                trace,
            });
        }
        let surrogate = ProxSurrogate::new(xbar.clone(), rho)?;
        let f_next = surrogate.lower(&res.next).fx;
        outer.push(OuterStep {
            f_center,
            f_next,
            delta_bar: res.delta_bar,
            gr_calls: res.gr_calls,
        });
        let cap = opts.max_outer.unwrap_or_else(|| {
            let est = (f0 - lowest).max(0.0);
            (16.0 * rho * est / (opts.eps * opts.eps)).ceil() as usize + 10
        });
        if outer.len() >= cap {
            return Err(Error::IterationCap {
                stage: "proximal point outer loop",
                cap,
            });
        }
        xbar = res.next.query;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoreauResidual {
    pub residual: f64,
    pub xhat: Point,
    /// Upper and lower bounds on `min_x f(x) + rho ||x - xbar||^2`.
    pub min_upper: f64,
    pub min_lower: f64,
    pub f_xbar: f64,
}

/// `||rho (xbar - xhat)||` with `xhat = argmin f + rho ||. - xbar||^2`, solved to
/// accuracy `high_acc_tol` in function value.
pub fn moreau_residual(
    base: &mut dyn FirstOrderOracle,
    region: &Region,
    xbar: &Point,
    rho: f64,
    high_acc_tol: f64,
) -> Result<MoreauResidual> {
    let mut prox = ProxOracle::new(base, xbar.clone(), rho)?;
    let mut opts = BlMuOptions::new(rho, 8, high_acc_tol);
    opts.max_outer = 2000;
    let res = bl_mu(&mut prox, region, xbar, &opts)?;
    let f_xbar = res.trace.records.first().map_or(f64::NAN, |r| r.fx);
    let xhat = res.best.query.clone();
    let residual = rho * xbar.dist(&xhat);
    Ok(MoreauResidual {
        residual,
        xhat,
        min_upper: res.fbar,
        min_lower: res.funder,
        f_xbar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{abs_1d, max_of_quadratics, InstanceOracle};

    #[test]
    fn lifted_cut_of_zero_function() {
        let s = ProxSurrogate::new(Point(vec![0.0]), 1.0).unwrap();
        let base = Cut {
            center: Point(vec![1.0]),
            value: 0.0,
            gradient: vec![0.0],
        };
        let lifted = s.lift_cut(&base);
        assert_eq!(lifted.support(&[0.0]), -1.0);
        assert_eq!(lifted.support(&[2.0]), 3.0);
        assert_eq!(s.lower_cut(&lifted), base);
    }

    #[test]
    fn moreau_residual_of_abs() {
        let inst = abs_1d();
        let mut o = InstanceOracle::exact(&inst);
        let r =
            moreau_residual(&mut o, &Region::WholeSpace, &Point(vec![2.0]), 1.0, 1e-12).unwrap();
        assert!((r.xhat[0] - 1.5).abs() < 1e-5, "xhat = {:?}", r.xhat);
        assert!((r.residual - 0.5).abs() < 1e-5);
    }

    #[test]
    fn ippm_at_smooth_minimizer_stops_immediately() {
        let inst = max_of_quadratics(1, 2, 3.0, 1.0, 0).unwrap();
        let mut o = InstanceOracle::exact(&inst);
        let res = ippm(
            &mut o,
            &Region::WholeSpace,
            &Point(vec![0.0, 0.0]),
            &IppmOptions::new(1.0, 4, 1e-3),
        )
        .unwrap();
        assert!(res.outer.is_empty());
        assert_eq!(res.xbar.0, vec![0.0, 0.0]);
    }

    #[test]
    fn ippm_descends_by_half_gap() {
        let inst = crate::problems::weakly_convex_max(3, 2, 1.0, 4, 2.0).unwrap();
        let mut o = InstanceOracle::exact(&inst);
        let res = ippm(
            &mut o,
            &inst.region,
            &Point(vec![1.5, -1.5]),
            &IppmOptions::new(1.0, 6, 1e-2),
        )
        .unwrap();
        for st in &res.outer {
            assert!(st.f_center - st.f_next >= st.delta_bar / 2.0 - 1e-10);
        }
    }
}
