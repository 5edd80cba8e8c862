//! Bundle storage, traces, the known-optimal-value bundle-level method and
//! the matching-pair statistics used to analyse it.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_onto_level_set, LevelProjection, Region, DEFAULT_QP_TOL};
use crate::linalg::{dist_sq, Point};
use crate::problems::{Cut, FirstOrderOracle, OracleSample};

/// The `m` most recent cuts, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    capacity: usize,
    cuts: VecDeque<Cut>,
}

impl Bundle {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::param("m", "bundle size must be at least 1"));
        }
        Ok(Bundle {
            capacity,
            cuts: VecDeque::with_capacity(capacity),
        })
    }

    pub fn push(&mut self, cut: Cut) {
        if self.cuts.len() == self.capacity {
            self.cuts.pop_front();
        }
        self.cuts.push_back(cut);
    }

    pub fn cuts(&self) -> Vec<Cut> {
        self.cuts.iter().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    Step,
    MatchingPair {
        l: usize,
        r: usize,
    },
    BoundUpdate,
    Restart,
    Certificate,
    /// Start of a proximal outer iteration; carries the previous gap estimate.
    Outer {
        index: usize,
        delta_bar: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub oracle_calls: u64,
    pub x: Point,
    pub fx: f64,
    pub dist_to_xstar: Option<f64>,
    pub level: Option<f64>,
    pub piece: Option<usize>,
    pub kkt_residual: Option<f64>,
    pub event: TraceEvent,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fbar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub funder: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cut: Option<Cut>,
}

impl TraceRecord {
    pub fn from_sample(s: &OracleSample, calls: u64, dist: Option<f64>, event: TraceEvent) -> Self {
        TraceRecord {
            iter: 0,
            oracle_calls: calls,
            x: s.query.clone(),
            fx: s.fx,
            dist_to_xstar: dist,
            level: None,
            piece: s.piece,
            kkt_residual: None,
            event,
            fbar: None,
            funder: None,
            cut: Some(s.cut.clone()),
        }
    }
}

/// Append-only iteration log; `iter` is assigned on push.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn push(&mut self, mut record: TraceRecord) {
        record.iter = self.records.len();
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.piece.unwrap_or(0)).collect()
    }

    pub fn mark_pairs(&mut self, pairs: &[(usize, usize)]) {
        for &(l, r) in pairs {
            if let Some(rec) = self.records.get_mut(r) {
                rec.event = TraceEvent::MatchingPair { l, r };
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlOptions {
    pub m: usize,
    pub fstar: f64,
    pub max_iters: usize,
    /// Stop once `f(x) - fstar` drops to this value.
    pub stop_gap: f64,
    pub tol: f64,
}

impl BlOptions {
    pub fn new(m: usize, fstar: f64) -> Self {
        BlOptions {
            m,
            fstar,
            max_iters: 1000,
            stop_gap: 0.0,
            tol: DEFAULT_QP_TOL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlResult {
    pub x_best: Point,
    pub f_best: f64,
    pub trace: Trace,
}

/// Bundle-level iteration with known optimal value:
/// `x+ = proj of x onto {x in X : cut_i(x) <= f*}` over the `m` most recent cuts.
pub fn run_bl(
    oracle: &mut dyn FirstOrderOracle,
    region: &Region,
    x0: &Point,
    opts: &BlOptions,
) -> Result<BlResult> {
    if x0.dim() != oracle.dim() {
        return Err(Error::Dimension {
            expected: oracle.dim(),
            got: x0.dim(),
        });
    }
    let mut bundle = Bundle::new(opts.m)?;
    let mut trace = Trace::default();
    let mut x = region.project(x0);
    let mut kkt = None;
    let mut best: Option<(Point, f64)> = None;
    for t in 0..=opts.max_iters {
        if !oracle.has_budget() {
            let (best_x, best_f) = best.unwrap_or((x.clone(), f64::INFINITY));
            return Err(Error::BudgetExhausted {
                budget: oracle.calls(),
                best_x,
                best_f,
            });
        }
        let s = oracle.sample(&x)?;
        let mut rec = TraceRecord::from_sample(
            &s,
            oracle.calls(),
            oracle.distance_to_solution(&x),
            TraceEvent::Step,
        );
        rec.level = Some(opts.fstar);
        rec.kkt_residual = kkt;
        trace.push(rec);
        if best.as_ref().map_or(true, |(_, f)| s.fx < *f) {
            best = Some((x.clone(), s.fx));
        }
        if s.fx - opts.fstar <= opts.stop_gap || t == opts.max_iters {
            break;
        }
        bundle.push(s.cut);
        match project_onto_level_set(&x, &bundle.cuts(), opts.fstar, region, opts.tol)? {
            LevelProjection::Feasible {
                point,
                kkt_residual,
                ..
            } => {
                x = point;
                kkt = Some(kkt_residual);
            }
            LevelProjection::Infeasible { .. } => {
                return Err(Error::LevelSetEmpty {
                    iteration: t,
                    trace: Box::new(trace),
                });
            }
        }
    }
    let (x_best, f_best) = best.expect("at least one oracle call");
    Ok(BlResult {
        x_best,
        f_best,
        trace,
    })
}

/// Greedy extraction of non-overlapping same-label pairs `(l, r)` with `r - l <= max_sep`
/// and `r <= horizon`: scan left to right, close a pair at the first recurrence of a
/// label, pairing it with its nearest earlier occurrence.
pub fn detect_matching_pairs(
    labels: &[usize],
    max_sep: usize,
    horizon: usize,
) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let end = horizon.min(labels.len().saturating_sub(1));
    let mut start = 0;
    let mut r = 1;
    while r <= end {
        let lo = start.max(r.saturating_sub(max_sep));
        if let Some(l) = (lo..r).rev().find(|&q| labels[q] == labels[r]) {
            pairs.push((l, r));
            start = r;
        }
        r += 1;
    }
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchingStats {
    pub pairs: usize,
    pub horizon: usize,
    /// `N / p`.
    pub kappa_bar: f64,
    /// `p / sum 1/(r - l)`.
    pub sigma_bar: f64,
    /// Weighted harmonic mean of the per-pair smoothness estimates.
    pub l_bar: Option<f64>,
}

pub fn matching_stats(
    pairs: &[(usize, usize)],
    horizon: usize,
    smoothness: Option<&[f64]>,
) -> MatchingStats {
    let p = pairs.len();
    let w: f64 = pairs.iter().map(|(l, r)| 1.0 / (r - l) as f64).sum();
    let l_bar = smoothness.map(|lt| {
        let denom: f64 = pairs
            .iter()
            .zip(lt)
            .map(|((l, r), li)| 1.0 / ((r - l) as f64 * li))
            .sum();
        w / denom
    });
    MatchingStats {
        pairs: p,
        horizon,
        kappa_bar: if p == 0 {
            f64::INFINITY
        } else {
            horizon as f64 / p as f64
        },
        sigma_bar: if p == 0 { f64::INFINITY } else { p as f64 / w },
        l_bar,
    }
}

/// `max{ 2 (f(x_r) - cut_l(x_r) - slack) / ||x_r - x_l||^2, 0 }`.
pub fn empirical_smoothness(
    x_r: &[f64],
    f_r: f64,
    x_l: &[f64],
    cut_l: &Cut,
    slack: f64,
) -> Result<f64> {
    let d2 = dist_sq(x_r, x_l);
    if d2 == 0.0 {
        return Err(Error::param(
            "points",
            "empirical smoothness is undefined for coincident points",
        ));
    }
    Ok((2.0 * (f_r - cut_l.support(x_r) - slack) / d2).max(0.0))
}

/// `||x^{t+j} - x*||^2 + ||x^{t+j} - x^t||^2 / j - ||x^t - x*||^2`; non-positive when the
/// bridged three-point inequality holds.
pub fn bridged_three_point_violation(trace: &Trace, xstar: &[f64], t: usize, j: usize) -> f64 {
    let a = &trace.records[t].x;
    let b = &trace.records[t + j].x;
    dist_sq(b, xstar) + dist_sq(b, a) / j as f64 - dist_sq(a, xstar)
}

/// Largest bridged three-point violation over all `t` and `1 <= j <= j_max`.
pub fn bridged_three_point_check(trace: &Trace, xstar: &[f64], j_max: usize) -> f64 {
    let n = trace.len();
    let mut worst = f64::NEG_INFINITY;
    for t in 0..n {
        for j in 1..=j_max.min(n - 1 - t) {
            worst = worst.max(bridged_three_point_violation(trace, xstar, t, j));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{demo_pws, max_of_quadratics, InstanceOracle};

    #[test]
    fn bl_on_square_halves() {
        let inst = max_of_quadratics(1, 1, 2.0, 2.0, 0).unwrap();
        let mut oracle = InstanceOracle::exact(&inst);
        let mut opts = BlOptions::new(1, 0.0);
        opts.max_iters = 10;
        let res = run_bl(&mut oracle, &Region::WholeSpace, &Point(vec![1.0]), &opts).unwrap();
        for (t, rec) in res.trace.records.iter().enumerate() {
            assert!((rec.x[0] - 0.5f64.powi(t as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn bl_too_small_fstar_fails_with_trace() {
        let inst = max_of_quadratics(1, 1, 2.0, 2.0, 0).unwrap();
        let mut oracle = InstanceOracle::exact(&inst);
        let mut opts = BlOptions::new(2, -1.0);
        opts.max_iters = 50;
        match run_bl(&mut oracle, &Region::WholeSpace, &Point(vec![1.0]), &opts) {
            Err(Error::LevelSetEmpty { trace, .. }) => assert!(!trace.is_empty()),
            other => panic!("expected empty level set, got {other:?}"),
        }
    }

    #[test]
    fn bl_on_demo_converges_fast() {
        let inst = demo_pws();
        let mut oracle = InstanceOracle::exact(&inst);
        let mut opts = BlOptions::new(3, 0.0);
        opts.max_iters = 99;
        opts.stop_gap = 1e-17;
        let res = run_bl(
            &mut oracle,
            &Region::WholeSpace,
            &Point(vec![1e-4, 1e-2]),
            &opts,
        )
        .expect("bl run");
        let hit = res
            .trace
            .records
            .iter()
            .find(|r| r.dist_to_xstar.unwrap() <= 1e-8);
        assert!(hit.is_some_and(|r| r.oracle_calls <= 100));
    }

    #[test]
    fn matching_pairs_alternating() {
        let labels = [1, 2, 1, 2, 1];
        let pairs = detect_matching_pairs(&labels, 2, 4);
        assert_eq!(pairs, vec![(0, 2), (2, 4)]);
        let st = matching_stats(&pairs, 4, None);
        assert_eq!(st.kappa_bar, 2.0);
        assert_eq!(st.sigma_bar, 2.0);
    }

    #[test]
    fn matching_pairs_constant_labels() {
        let pairs = detect_matching_pairs(&[3; 6], 1, 5);
        assert_eq!(pairs, (0..5).map(|t| (t, t + 1)).collect::<Vec<_>>());
    }

    #[test]
    fn bridged_example_value() {
        let mut trace = Trace::default();
        for x in [1.0, 0.5, 0.25] {
            trace.push(TraceRecord {
                iter: 0,
                oracle_calls: 0,
                x: Point(vec![x]),
                fx: x * x,
                dist_to_xstar: None,
                level: None,
                piece: None,
                kkt_residual: None,
                event: TraceEvent::Step,
                fbar: None,
                funder: None,
                cut: None,
            });
        }
        let v = bridged_three_point_violation(&trace, &[0.0], 0, 2);
        assert!((v + 1.0 - 0.34375).abs() < 1e-15);
    }

    #[test]
    fn bundle_evicts_oldest() {
        let mut b = Bundle::new(2).unwrap();
        for v in 0..3 {
            b.push(Cut {
                center: Point(vec![0.0]),
                value: v as f64,
                gradient: vec![0.0],
            });
        }
        let vals: Vec<f64> = b.cuts().iter().map(|c| c.value).collect();
        assert_eq!(vals, vec![1.0, 2.0]);
    }
}
